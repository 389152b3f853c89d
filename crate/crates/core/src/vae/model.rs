use serde::Serialize;

use super::gru::{GruStep, GruWeights};
use super::tensor::{log_sum_exp, softmax, Tensor};
use super::VaeParams;
use crate::error::{Error, Result};

/// Summed final encoder state plus the per-step activations of both
/// directions. `bwd[k]` is the step that consumed `ids[len - 1 - k]`.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub h: Vec<f64>,
    pub fwd: Vec<GruStep>,
    pub bwd: Vec<GruStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    /// Mean cross-entropy per predicted token, in nats.
    pub ce: f64,
    pub kl: f64,
    /// KL weight used for `total`.
    pub beta: f64,
    pub total: f64,
}

fn check_ids(params: &VaeParams, ids: &[usize]) -> Result<()> {
    let size = params.embedding.rows;
    match ids.iter().find(|&&id| id >= size) {
        Some(&id) => Err(Error::TokenOutOfRange { id, size }),
        None => Ok(()),
    }
}

fn run_gru<'a>(gru: &GruWeights, emb: &Tensor, ids: impl Iterator<Item = &'a usize>, h0: Vec<f64>) -> Vec<GruStep> {
    let mut steps: Vec<GruStep> = Vec::new();
    let mut h = h0;
    for &id in ids {
        let step = gru.step(emb.row(id), &h);
        h.clone_from(&step.h);
        steps.push(step);
    }
    steps
}

/// Runs both encoder directions from zero state and sums their final states.
pub fn encoder_forward(params: &VaeParams, ids: &[usize]) -> Result<EncoderOutput> {
    if ids.is_empty() {
        return Err(Error::Config("encoder input must be non-empty".into()));
    }
    check_ids(params, ids)?;
    let hd = params.enc_fwd.hidden();
    let fwd = run_gru(&params.enc_fwd, &params.embedding, ids.iter(), vec![0.0; hd]);
    let bwd = run_gru(&params.enc_bwd, &params.embedding, ids.iter().rev(), vec![0.0; hd]);
    let h = fwd
        .last()
        .unwrap()
        .h
        .iter()
        .zip(&bwd.last().unwrap().h)
        .map(|(a, b)| a + b)
        .collect();
    Ok(EncoderOutput { h, fwd, bwd })
}

/// Projects the encoder state to (μ, log σ²) and reparameterises
/// `z = μ + r ⊙ exp(log σ² / 2)`.
pub fn latent(params: &VaeParams, h: &[f64], r: &[f64]) -> Latent {
    let mut out = params.latent_b.data.clone();
    params.latent_w.matvec_acc(h, &mut out);
    let zd = out.len() / 2;
    let logvar = out.split_off(zd);
    let mu = out;
    let z = mu
        .iter()
        .zip(&logvar)
        .zip(r)
        .map(|((m, lv), r)| m + r * (lv / 2.0).exp())
        .collect();
    Latent { mu, logvar, z }
}

struct DecoderPass {
    steps: Vec<GruStep>,
    logits: Vec<Vec<f64>>,
}

fn decoder_pass(params: &VaeParams, z: &[f64], targets: &[usize]) -> DecoderPass {
    let mut s0 = params.dec_init_b.data.clone();
    params.dec_init_w.matvec_acc(z, &mut s0);
    let steps = run_gru(
        &params.decoder,
        &params.embedding,
        targets[..targets.len() - 1].iter(),
        s0,
    );
    let logits = steps
        .iter()
        .map(|s| {
            let mut l = params.out_b.data.clone();
            params.out_w.matvec_acc(&s.h, &mut l);
            l
        })
        .collect();
    DecoderPass { steps, logits }
}

/// Teacher-forced decoding: step `i` consumes `targets[i]` and its logits
/// predict `targets[i + 1]`. Returns `targets.len() - 1` logit vectors.
pub fn decoder_forward(params: &VaeParams, z: &[f64], targets: &[usize]) -> Result<Vec<Vec<f64>>> {
    if targets.len() < 2 {
        return Err(Error::Config("decoder targets need at least BOS and EOS".into()));
    }
    check_ids(params, targets)?;
    Ok(decoder_pass(params, z, targets).logits)
}

fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    let kl: f64 = mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - lv - 1.0)
        .sum::<f64>()
        * 0.5;
    kl.max(0.0)
}

/// Per-token cross-entropy of `logits[i]` against `targets[i + 1]`, plus the
/// KL divergence of `N(μ, σ²)` from `N(0, I)` weighted by `beta`.
pub fn elbo_loss(logits: &[Vec<f64>], targets: &[usize], mu: &[f64], logvar: &[f64], beta: f64) -> LossBreakdown {
    let n = logits.len();
    let ce_sum: f64 = logits
        .iter()
        .zip(&targets[1..])
        .map(|(l, &t)| (log_sum_exp(l) - l[t]).max(0.0))
        .sum();
    let ce = if n == 0 { 0.0 } else { ce_sum / n as f64 };
    let kl = kl_divergence(mu, logvar);
    LossBreakdown {
        ce,
        kl,
        beta,
        total: ce + beta * kl,
    }
}

/// Loss of one sequence for a given noise draw `r`.
pub fn example_loss(params: &VaeParams, ids: &[usize], r: &[f64], beta: f64) -> Result<LossBreakdown> {
    let enc = encoder_forward(params, ids)?;
    let lat = latent(params, &enc.h, r);
    let logits = decoder_forward(params, &lat.z, ids)?;
    Ok(elbo_loss(&logits, ids, &lat.mu, &lat.logvar, beta))
}

#[allow(clippy::too_many_arguments)]
fn gru_backward(
    gru: &GruWeights,
    grad_gru: &mut GruWeights,
    emb: &Tensor,
    grad_emb: &mut Tensor,
    ids: &[usize],
    steps: &[GruStep],
    mut dh: Vec<f64>,
    extra_dh: Option<&[Vec<f64>]>,
) -> Vec<f64> {
    let mut dx = vec![0.0; emb.cols];
    for (k, step) in steps.iter().enumerate().rev() {
        if let Some(extra) = extra_dh {
            super::tensor::axpy(1.0, &extra[k], &mut dh);
        }
        dx.iter_mut().for_each(|v| *v = 0.0);
        dh = gru.step_backward(emb.row(ids[k]), step, &dh, grad_gru, &mut dx);
        grad_emb.row_mut(ids[k]).iter_mut().zip(&dx).for_each(|(g, d)| *g += d);
    }
    dh
}

/// Loss and gradient of one sequence; the gradient is accumulated into `grad`.
pub fn example_gradient(
    params: &VaeParams,
    ids: &[usize],
    r: &[f64],
    beta: f64,
    grad: &mut VaeParams,
) -> Result<LossBreakdown> {
    if ids.len() < 2 {
        return Err(Error::Config("training sequences need at least BOS and EOS".into()));
    }
    let enc = encoder_forward(params, ids)?;
    let lat = latent(params, &enc.h, r);
    let dec = decoder_pass(params, &lat.z, ids);
    let loss = elbo_loss(&dec.logits, ids, &lat.mu, &lat.logvar, beta);

    // Output projection.
    let n = dec.logits.len() as f64;
    let mut ds_out: Vec<Vec<f64>> = Vec::with_capacity(dec.steps.len());
    for ((logits, step), &target) in dec.logits.iter().zip(&dec.steps).zip(&ids[1..]) {
        let mut dl = softmax(logits);
        dl[target] -= 1.0;
        dl.iter_mut().for_each(|v| *v /= n);
        grad.out_w.outer_acc(&dl, &step.h);
        grad.out_b.add_slice(&dl);
        let mut ds = vec![0.0; step.h.len()];
        params.out_w.matvec_t_acc(&dl, &mut ds);
        ds_out.push(ds);
    }

    // Decoder GRU, then the latent-to-state map.
    let hd = params.decoder.hidden();
    let dec_inputs = &ids[..ids.len() - 1];
    let ds0 = gru_backward(
        &params.decoder,
        &mut grad.decoder,
        &params.embedding,
        &mut grad.embedding,
        dec_inputs,
        &dec.steps,
        vec![0.0; hd],
        Some(&ds_out),
    );
    grad.dec_init_w.outer_acc(&ds0, &lat.z);
    grad.dec_init_b.add_slice(&ds0);
    let mut dz = vec![0.0; lat.z.len()];
    params.dec_init_w.matvec_t_acc(&ds0, &mut dz);

    // Reparameterisation and KL.
    let zd = lat.mu.len();
    let mut dlat = vec![0.0; 2 * zd];
    for j in 0..zd {
        let sd = (lat.logvar[j] / 2.0).exp();
        dlat[j] = dz[j] + beta * lat.mu[j];
        dlat[zd + j] = dz[j] * r[j] * 0.5 * sd + beta * 0.5 * (lat.logvar[j].exp() - 1.0);
    }
    grad.latent_w.outer_acc(&dlat, &enc.h);
    grad.latent_b.add_slice(&dlat);
    let mut dh = vec![0.0; enc.h.len()];
    params.latent_w.matvec_t_acc(&dlat, &mut dh);

    // Both encoder directions receive the same gradient (h is their sum).
    gru_backward(
        &params.enc_fwd,
        &mut grad.enc_fwd,
        &params.embedding,
        &mut grad.embedding,
        ids,
        &enc.fwd,
        dh.clone(),
        None,
    );
    let reversed: Vec<usize> = ids.iter().rev().copied().collect();
    gru_backward(
        &params.enc_bwd,
        &mut grad.enc_bwd,
        &params.embedding,
        &mut grad.embedding,
        &reversed,
        &enc.bwd,
        dh,
        None,
    );
    Ok(loss)
}

/// Anomaly score of an encoded sequence: teacher-forced mean cross-entropy
/// per token with the latent fixed at its mean. Deterministic.
pub fn reconstruction_loss(params: &VaeParams, ids: &[usize]) -> Result<f64> {
    let enc = encoder_forward(params, ids)?;
    let zeros = vec![0.0; params.dec_init_w.cols];
    let lat = latent(params, &enc.h, &zeros);
    let logits = decoder_forward(params, &lat.mu, ids)?;
    Ok(elbo_loss(&logits, ids, &lat.mu, &lat.logvar, 0.0).ce)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::VaeConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> VaeConfig {
        VaeConfig {
            d: 2,
            h_dim: 2,
            z_dim: 2,
            o_w: 6,
            max_len: 8,
            ..VaeConfig::default()
        }
    }

    #[test]
    fn zero_encoder_gives_zero_state() {
        let p = VaeParams::zeros(&tiny());
        let out = encoder_forward(&p, &[1, 4, 5, 2]).unwrap();
        assert_eq!(out.h, vec![0.0, 0.0]);
        assert!(matches!(
            encoder_forward(&p, &[1, 6]),
            Err(Error::TokenOutOfRange { id: 6, size: 6 })
        ));
    }

    #[test]
    fn single_token_doubles_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = VaeParams::uniform(&tiny(), 0.5, &mut rng);
        p.enc_bwd = p.enc_fwd.clone();
        let out = encoder_forward(&p, &[4]).unwrap();
        let one = p.enc_fwd.step(p.embedding.row(4), &[0.0, 0.0]).h;
        assert_eq!(out.fwd[0].h, out.bwd[0].h);
        assert_eq!(out.h, vec![2.0 * one[0], 2.0 * one[1]]);
    }

    #[test]
    fn tied_directions_are_reversal_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = VaeParams::uniform(&tiny(), 0.5, &mut rng);
        p.enc_bwd = p.enc_fwd.clone();
        let a = encoder_forward(&p, &[1, 4, 5, 3, 2]).unwrap().h;
        let b = encoder_forward(&p, &[2, 3, 5, 4, 1]).unwrap().h;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn latent_examples() {
        let mut p = VaeParams::zeros(&tiny());
        p.latent_b.data = vec![1.0, 0.0, 0.0, 4f64.ln()];
        let l = latent(&p, &[0.0, 0.0], &[2.0, -1.0]);
        assert_eq!(l.mu, vec![1.0, 0.0]);
        assert!((l.z[0] - 3.0).abs() < 1e-15 && (l.z[1] + 2.0).abs() < 1e-15);
        let l = latent(&p, &[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(l.z, l.mu);
        p.latent_b.data = vec![0.5, -0.5, 0.0, 0.0];
        let l = latent(&p, &[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(l.z, vec![1.5, 0.5]);
    }

    #[test]
    fn zero_network_is_uniform() {
        let cfg = VaeConfig { o_w: 20, ..tiny() };
        let p = VaeParams::zeros(&cfg);
        let targets = [1, 7, 9, 12, 2];
        let logits = decoder_forward(&p, &[0.0, 0.0], &targets).unwrap();
        assert_eq!(logits.len(), 4);
        let loss = elbo_loss(&logits, &targets, &[0.0, 0.0], &[0.0, 0.0], 1.0);
        assert!((loss.ce - 20f64.ln()).abs() < 1e-12);
        assert!((loss.ce - 2.9957).abs() < 1e-4);
        assert_eq!(loss.kl, 0.0);
        assert_eq!(reconstruction_loss(&p, &targets).unwrap(), loss.ce);
    }

    #[test]
    fn kl_closed_form() {
        assert_eq!(kl_divergence(&[0.0], &[0.0]), 0.0);
        assert_eq!(kl_divergence(&[1.0], &[0.0]), 0.5);
        let loss = elbo_loss(&[], &[1], &[1.0], &[0.0], 0.25);
        assert_eq!(loss.total, 0.125);
    }

    #[test]
    fn confident_logits_give_near_zero_ce() {
        let targets = [1, 4, 2];
        let logits: Vec<Vec<f64>> = targets[1..]
            .iter()
            .map(|&t| (0..6).map(|i| if i == t { 50.0 } else { -50.0 }).collect())
            .collect();
        let loss = elbo_loss(&logits, &targets, &[0.0], &[0.0], 1.0);
        assert!(loss.ce < 1e-40);
    }

    #[test]
    fn scoring_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = VaeParams::uniform(&tiny(), 0.3, &mut rng);
        let a = reconstruction_loss(&p, &[1, 4, 5, 2]).unwrap();
        let b = reconstruction_loss(&p, &[1, 4, 5, 2]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(a >= 0.0);
    }
}
