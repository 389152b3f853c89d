//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! "QDVA" | u32 version
//! u64 d, h_dim, z_dim, o_w, max_len, epochs, batch_size, kl_anneal_steps
//! f64 learning_rate | u64 seed
//! [u8; 32] vocabulary SHA-256
//! f64 × num_params, tensors in VaeParams::tensors order
//! ```

use std::path::Path;

use super::{VaeConfig, VaeParams};
use crate::error::{Error, Result};
use crate::textenc::Vocabulary;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"QDVA";
pub const CHECKPOINT_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 10 * 8 + 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: VaeConfig,
    pub vocab_hash: [u8; 32],
    pub params: VaeParams,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.params.num_params());
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [
            c.d,
            c.h_dim,
            c.z_dim,
            c.o_w,
            c.max_len,
            c.epochs,
            c.batch_size,
            c.kl_anneal_steps,
        ] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(&c.learning_rate.to_le_bytes());
        out.extend_from_slice(&c.seed.to_le_bytes());
        out.extend_from_slice(&self.vocab_hash);
        for t in self.params.tensors() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Checkpoint(format!(
                "truncated header: {} bytes, need {HEADER_LEN}",
                bytes.len()
            )));
        }
        let mut pos = 8;
        let mut next8 = || {
            let b: [u8; 8] = bytes[pos..pos + 8].try_into().unwrap();
            pos += 8;
            b
        };
        let mut dims = [0usize; 8];
        for d in dims.iter_mut() {
            *d = usize::try_from(u64::from_le_bytes(next8()))
                .map_err(|_| Error::Checkpoint("dimension overflows usize".into()))?;
        }
        let learning_rate = f64::from_le_bytes(next8());
        let seed = u64::from_le_bytes(next8());
        let config = VaeConfig {
            d: dims[0],
            h_dim: dims[1],
            z_dim: dims[2],
            o_w: dims[3],
            max_len: dims[4],
            epochs: dims[5],
            batch_size: dims[6],
            kl_anneal_steps: dims[7],
            learning_rate,
            seed,
        };
        config
            .validate()
            .map_err(|e| Error::Checkpoint(format!("bad config block: {e}")))?;
        let vocab_hash: [u8; 32] = bytes[HEADER_LEN - 32..HEADER_LEN].try_into().unwrap();

        let mut params = VaeParams::zeros(&config);
        let expected = HEADER_LEN + 8 * params.num_params();
        if bytes.len() != expected {
            return Err(Error::Checkpoint(format!(
                "size mismatch: {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let mut chunks = bytes[HEADER_LEN..].chunks_exact(8);
        for t in params.tensors_mut() {
            for v in t.data.iter_mut() {
                *v = f64::from_le_bytes(chunks.next().unwrap().try_into().unwrap());
            }
        }
        Ok(Checkpoint {
            config,
            vocab_hash,
            params,
        })
    }
}

pub fn save_checkpoint(
    params: &VaeParams,
    config: &VaeConfig,
    vocab_hash: [u8; 32],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if !params.config_matches(config) {
        return Err(Error::Checkpoint("parameter shapes do not match config".into()));
    }
    let ckpt = Checkpoint {
        config: config.clone(),
        vocab_hash,
        params: params.clone(),
    };
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint without checking it against a vocabulary.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

/// Reads a checkpoint and verifies it was trained with `vocab`.
pub fn load_checkpoint(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<(VaeParams, VaeConfig)> {
    let ckpt = read_checkpoint(path)?;
    if ckpt.vocab_hash != vocab.content_hash() || ckpt.config.o_w != vocab.len() {
        return Err(Error::VocabMismatch);
    }
    Ok((ckpt.params, ckpt.config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> (VaeConfig, VaeParams, Vocabulary) {
        let tokens = vec![vec!["sort".to_owned(), "list".to_owned()]];
        let vocab = Vocabulary::build(&tokens, 10, 1).unwrap();
        let cfg = VaeConfig {
            d: 3,
            h_dim: 5,
            z_dim: 2,
            o_w: vocab.len(),
            ..VaeConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = VaeParams::uniform(&cfg, 1.0, &mut rng);
        (cfg, params, vocab)
    }

    #[test]
    fn bitwise_round_trip() {
        let (cfg, params, vocab) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.qdva");
        save_checkpoint(&params, &cfg, vocab.content_hash(), &path).unwrap();
        let (p2, c2) = load_checkpoint(&path, &vocab).unwrap();
        assert_eq!(c2, cfg);
        for (a, b) in params.tensors().iter().zip(p2.tensors()) {
            assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn truncated_and_corrupt_files() {
        let (cfg, params, vocab) = sample();
        let bytes = Checkpoint {
            config: cfg,
            vocab_hash: vocab.content_hash(),
            params,
        }
        .to_bytes();
        for cut in [3, 20, HEADER_LEN, bytes.len() - 1] {
            assert!(
                matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Checkpoint(_))),
                "cut {cut}"
            );
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).unwrap_err().to_string().contains("magic"));
        let mut bad = bytes;
        bad[4] = 9;
        assert!(Checkpoint::from_bytes(&bad)
            .unwrap_err()
            .to_string()
            .contains("version"));
    }

    #[test]
    fn vocabulary_mismatch() {
        let (cfg, params, vocab) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.qdva");
        save_checkpoint(&params, &cfg, vocab.content_hash(), &path).unwrap();
        let other = Vocabulary::build(&[vec!["list".to_owned(), "sort".to_owned(), "sort".to_owned()]], 10, 1).unwrap();
        let err = load_checkpoint(&path, &other).unwrap_err();
        assert_eq!(err.to_string(), "model/vocabulary mismatch");
    }
}
