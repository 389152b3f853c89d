//! Training the GRU-VAE on a query corpus and saving a checkpoint.
//!
//! cargo run --release --example train_vae [epochs]

use querysift::corpus::prepare_bootstrap;
use querysift::rules::Ruleset;
use querysift::textenc::{tokenize, Vocabulary};
use querysift::vae::{self, VaeConfig};

const TITLES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/titles.txt");

pub fn run(epochs: usize) -> querysift::Result<()> {
    let text = std::fs::read_to_string(TITLES).map_err(|e| querysift::Error::Config(e.to_string()))?;
    let (queries, _) = prepare_bootstrap(text.lines(), &Ruleset::bootstrap_default());
    let tokens: Vec<Vec<String>> = queries.iter().map(|q| tokenize(q)).collect();
    let vocab = Vocabulary::build(&tokens, 2000, 1)?;

    let cfg = VaeConfig {
        d: 16,
        h_dim: 32,
        z_dim: 8,
        o_w: vocab.len(),
        max_len: 16,
        epochs,
        batch_size: 16,
        learning_rate: 5e-3,
        kl_anneal_steps: 40,
        seed: 7,
    };
    let data: Vec<Vec<usize>> = tokens.iter().map(|t| vocab.encode(t, cfg.max_len)).collect();
    println!(
        "{} queries, vocabulary {}, {} parameters",
        data.len(),
        vocab.len(),
        vae::VaeParams::zeros(&cfg).num_params()
    );
    let (params, _) = vae::train_with_progress(&data, &cfg, |e| {
        println!("epoch {:>2}  ce {:.3}  kl {:.3}", e.epoch, e.ce, e.kl);
    })?;

    for probe in [
        "convert a string to an int",
        "sort a list of objects",
        "copyright the original author",
    ] {
        let ids = vocab.encode(&tokenize(probe), cfg.max_len);
        println!("{:.3}  {probe}", vae::reconstruction_loss(&params, &ids)?);
    }

    let dir = tempfile::tempdir().map_err(|e| querysift::Error::Config(e.to_string()))?;
    let path = dir.path().join("model.qdva");
    vae::save_checkpoint(&params, &cfg, vocab.content_hash(), &path)?;
    let (reloaded, _) = vae::load_checkpoint(&path, &vocab)?;
    assert_eq!(reloaded, params);
    println!("checkpoint round trip ok");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    run(epochs).unwrap();
}
