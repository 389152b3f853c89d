//! GRU variational auto-encoder over token sequences.
//!
//! A bidirectional GRU encodes a sentence; the two final hidden states are
//! summed and projected to the mean and log-variance of a diagonal Gaussian.
//! A latent sample initialises the hidden state of a GRU decoder that
//! re-generates the sentence under teacher forcing. Training minimises
//! per-token cross-entropy plus an annealed KL term. Comments are scored by
//! their reconstruction cross-entropy with the latent fixed at the mean.

mod checkpoint;
mod gru;
mod model;
mod tensor;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use gru::{GruStep, GruWeights};
pub use model::{
    decoder_forward, elbo_loss, encoder_forward, example_gradient, example_loss, latent, reconstruction_loss,
    EncoderOutput, Latent, LossBreakdown,
};
pub use tensor::{log_sum_exp, softmax, Tensor};
pub use train::{train, train_with_progress, EpochStats, TrainReport};

use crate::error::{Error, Result};

/// Range of the uniform initialisation of every parameter.
pub const INIT_SCALE: f64 = 0.08;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeConfig {
    /// Embedding dimension.
    pub d: usize,
    pub h_dim: usize,
    pub z_dim: usize,
    /// Vocabulary size; set from the vocabulary before training.
    pub o_w: usize,
    pub max_len: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub kl_anneal_steps: usize,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            d: 128,
            h_dim: 256,
            z_dim: 64,
            o_w: 4,
            max_len: 20,
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-3,
            kl_anneal_steps: 2000,
            seed: 42,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d", self.d),
            ("h_dim", self.h_dim),
            ("z_dim", self.z_dim),
            ("o_w", self.o_w),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("vae {name} must be >= 1")));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("vae batch_size must be >= 1".into()));
        }
        if self.max_len < 3 {
            return Err(Error::Config("vae max_len must be >= 3".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("vae learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// All learnable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    /// `o_w × d`, shared by encoder and decoder.
    pub embedding: Tensor,
    pub enc_fwd: GruWeights,
    pub enc_bwd: GruWeights,
    /// `2·z_dim × h_dim`; rows `0..z_dim` give μ, the rest log σ².
    pub latent_w: Tensor,
    pub latent_b: Tensor,
    /// `h_dim × z_dim` map from the latent to the decoder's initial state.
    pub dec_init_w: Tensor,
    pub dec_init_b: Tensor,
    pub decoder: GruWeights,
    /// `o_w × h_dim`
    pub out_w: Tensor,
    pub out_b: Tensor,
}

impl VaeParams {
    pub fn zeros(cfg: &VaeConfig) -> Self {
        let (d, h, z, o) = (cfg.d, cfg.h_dim, cfg.z_dim, cfg.o_w);
        VaeParams {
            embedding: Tensor::zeros(o, d),
            enc_fwd: GruWeights::zeros(d, h),
            enc_bwd: GruWeights::zeros(d, h),
            latent_w: Tensor::zeros(2 * z, h),
            latent_b: Tensor::zeros(2 * z, 1),
            dec_init_w: Tensor::zeros(h, z),
            dec_init_b: Tensor::zeros(h, 1),
            decoder: GruWeights::zeros(d, h),
            out_w: Tensor::zeros(o, h),
            out_b: Tensor::zeros(o, 1),
        }
    }

    /// Every entry drawn from `U[-scale, scale]`, in [`tensors`](Self::tensors) order.
    pub fn uniform(cfg: &VaeConfig, scale: f64, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(cfg);
        for t in p.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = rng.random_range(-scale..=scale));
        }
        p
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.embedding];
        v.extend(self.enc_fwd.tensors());
        v.extend(self.enc_bwd.tensors());
        v.extend([&self.latent_w, &self.latent_b, &self.dec_init_w, &self.dec_init_b]);
        v.extend(self.decoder.tensors());
        v.extend([&self.out_w, &self.out_b]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.embedding];
        v.extend(self.enc_fwd.tensors_mut());
        v.extend(self.enc_bwd.tensors_mut());
        v.extend([
            &mut self.latent_w,
            &mut self.latent_b,
            &mut self.dec_init_w,
            &mut self.dec_init_b,
        ]);
        v.extend(self.decoder.tensors_mut());
        v.extend([&mut self.out_w, &mut self.out_b]);
        v
    }

    /// Names matching [`tensors`](Self::tensors).
    pub fn tensor_names() -> Vec<String> {
        let mut v = vec!["embedding".to_owned()];
        for prefix in ["enc_fwd", "enc_bwd"] {
            v.extend(gru::GRU_TENSOR_NAMES.iter().map(|n| format!("{prefix}.{n}")));
        }
        v.extend(["latent_w", "latent_b", "dec_init_w", "dec_init_b"].map(String::from));
        v.extend(gru::GRU_TENSOR_NAMES.iter().map(|n| format!("decoder.{n}")));
        v.extend(["out_w", "out_b"].map(String::from));
        v
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn add_assign(&mut self, other: &VaeParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    /// True if every tensor has the shape `cfg` calls for.
    pub fn config_matches(&self, cfg: &VaeConfig) -> bool {
        let expected = Self::zeros(cfg);
        self.tensors()
            .iter()
            .zip(expected.tensors())
            .all(|(a, b)| a.rows == b.rows && a.cols == b.cols)
    }
}
