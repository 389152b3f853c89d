//! Retrieval metrics over first-hit ranks, and the inspection sample size.
//!
//! cargo run --example metrics

use querysift::metrics::{answered_at_k, mrr, read_rank_file, sample_size};

const RANKS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/ranks.jsonl");

pub fn run() -> querysift::Result<()> {
    let ranks: Vec<Option<u32>> = read_rank_file(RANKS)?.into_iter().map(|e| e.rank).collect();
    println!("ranks {ranks:?}");
    println!("MRR {:.4}", mrr(&ranks)?);
    for k in [1, 5, 10] {
        println!("Answered@{k} {}", answered_at_k(&ranks, k));
    }
    for population in [100, 10_000, 394_471] {
        println!(
            "sample size for {population}: {}",
            sample_size(population, 1.96, 0.5, 0.05)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().unwrap();
}
