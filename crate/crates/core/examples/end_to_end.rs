//! The whole pipeline on the bundled toy corpus, as `querysift run` does it.
//!
//! cargo run --release --example end_to_end [work_dir]

use std::path::{Path, PathBuf};

use querysift::cli::{cmd_run, Diag, PipelineConfig, RunInputs};
use querysift::corpus;

const CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/toy.toml");

pub fn run(work_dir: &Path) -> querysift::Result<()> {
    let config = PipelineConfig::load(CONFIG)?;
    let input = config.paths.input.clone().unwrap();
    let titles = config.paths.titles.clone().unwrap();
    let layout = cmd_run(
        &RunInputs {
            input: &input,
            bootstrap: None,
            titles: Some(&titles),
            work_dir,
            resume: false,
            strip_provenance: false,
        },
        &config,
        Diag { quiet: true },
    )?;

    let total = corpus::read_jsonl_all(&input)?.len();
    let rule_rejects = corpus::read_jsonl_all(&layout.rule_rejects)?;
    let semantic_rejects = corpus::read_jsonl_all(&layout.semantic_rejects)?;
    let retained = corpus::read_jsonl_all(&layout.retained)?;
    println!(
        "{total} pairs: {} rejected by rules, {} by the VAE, {} retained",
        rule_rejects.len(),
        semantic_rejects.len(),
        retained.len()
    );
    for r in retained.iter().take(5) {
        println!("  {:.3}  {}", r.score.unwrap(), r.comment);
    }
    if let Some(r) = retained.first() {
        println!("provenance of {}:", r.id);
        for p in &r.provenance {
            println!("  {}", serde_json::to_string(p).unwrap());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    match std::env::args().nth(1) {
        Some(dir) => run(&PathBuf::from(dir)).unwrap(),
        None => {
            let dir = tempfile::tempdir().unwrap();
            run(dir.path()).unwrap();
        }
    }
}
