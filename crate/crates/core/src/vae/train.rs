use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::model::{example_gradient, LossBreakdown};
use super::{VaeConfig, VaeParams, INIT_SCALE};
use crate::error::{Error, Result};

/// Examples per parallel work item. Gradients are summed per chunk and then
/// across chunks in chunk order, so results do not depend on thread count.
const GRAD_CHUNK: usize = 4;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub ce: f64,
    pub kl: f64,
    pub total: f64,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub steps: usize,
}

struct Adam {
    m: VaeParams,
    v: VaeParams,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(params: &VaeParams, lr: f64) -> Self {
        let mut m = params.clone();
        m.fill(0.0);
        Adam {
            v: m.clone(),
            m,
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut VaeParams, grad: &VaeParams) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let lr = self.lr;
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = ADAM_BETA1 * m.data[i] + (1.0 - ADAM_BETA1) * gi;
                v.data[i] = ADAM_BETA2 * v.data[i] + (1.0 - ADAM_BETA2) * gi * gi;
                let m_hat = m.data[i] / c1;
                let v_hat = v.data[i] / c2;
                p.data[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

fn kl_weight(step: usize, anneal_steps: usize) -> f64 {
    if anneal_steps == 0 {
        1.0
    } else {
        (step as f64 / anneal_steps as f64).min(1.0)
    }
}

/// Mean loss and gradient over a batch.
fn batch_gradient(params: &VaeParams, batch: &[(&[usize], Vec<f64>)], beta: f64) -> Result<(VaeParams, LossBreakdown)> {
    let partials: Vec<Result<(VaeParams, [f64; 3])>> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grad = params.clone();
            grad.fill(0.0);
            let mut sums = [0.0; 3];
            for (ids, r) in chunk {
                let loss = example_gradient(params, ids, r, beta, &mut grad)?;
                sums[0] += loss.ce;
                sums[1] += loss.kl;
                sums[2] += loss.total;
            }
            Ok((grad, sums))
        })
        .collect();

    let mut iter = partials.into_iter();
    let (mut grad, mut sums) = iter.next().expect("non-empty batch")?;
    for part in iter {
        let (g, s) = part?;
        grad.add_assign(&g);
        for k in 0..3 {
            sums[k] += s[k];
        }
    }
    let n = batch.len() as f64;
    grad.scale(1.0 / n);
    let loss = LossBreakdown {
        ce: sums[0] / n,
        kl: sums[1] / n,
        beta,
        total: sums[2] / n,
    };
    Ok((grad, loss))
}

/// Trains a fresh model. See [`train_with_progress`].
pub fn train(corpus: &[Vec<usize>], config: &VaeConfig) -> Result<(VaeParams, TrainReport)> {
    train_with_progress(corpus, config, |_| {})
}

/// Trains on encoded sequences (each `[BOS, .., EOS]`) with Adam on the
/// annealed ELBO, calling `on_epoch` after every epoch.
///
/// The corpus is put in canonical order before the seeded shuffle, so the
/// result depends on the seed and the multiset of sequences only.
pub fn train_with_progress(
    corpus: &[Vec<usize>],
    config: &VaeConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(VaeParams, TrainReport)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut data: Vec<&[usize]> = corpus.iter().map(Vec::as_slice).collect();
    data.sort_unstable();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = VaeParams::uniform(config, INIT_SCALE, &mut rng);
    let mut adam = Adam::new(&params, config.learning_rate);
    let mut report = TrainReport::default();

    for epoch in 0..config.epochs {
        let started = Instant::now();
        data.shuffle(&mut rng);
        let mut sums = [0.0; 3];
        for batch in data.chunks(config.batch_size) {
            let beta = kl_weight(report.steps, config.kl_anneal_steps);
            let batch: Vec<(&[usize], Vec<f64>)> = batch
                .iter()
                .map(|ids| {
                    let r = (0..config.z_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    (*ids, r)
                })
                .collect();
            let (grad, loss) = batch_gradient(&params, &batch, beta)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: report.steps,
                    epoch,
                });
            }
            adam.step(&mut params, &grad);
            if !params.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: report.steps,
                    epoch,
                });
            }
            report.steps += 1;
            let n = batch.len() as f64;
            sums[0] += loss.ce * n;
            sums[1] += loss.kl * n;
            sums[2] += loss.total * n;
        }
        let n = data.len() as f64;
        let stats = EpochStats {
            epoch,
            ce: sums[0] / n,
            kl: sums[1] / n,
            total: sums[2] / n,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&stats);
        report.epochs.push(stats);
    }
    Ok((params, report))
}
