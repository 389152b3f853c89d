//! Turning "how to" question titles into a declarative query corpus.
//!
//! cargo run --example bootstrap

use querysift::corpus::prepare_bootstrap;
use querysift::rules::Ruleset;

const TITLES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/titles.txt");

pub fn run() -> querysift::Result<()> {
    let text = std::fs::read_to_string(TITLES).map_err(|e| querysift::Error::Config(e.to_string()))?;
    let (queries, stats) = prepare_bootstrap(text.lines(), &Ruleset::bootstrap_default());
    for q in queries.iter().take(8) {
        println!("{q}");
    }
    println!("...");
    println!(
        "{} titles: {} not \"how to\", {} rejected {:?}, {} queries",
        stats.total,
        stats.not_how_to,
        stats.rejected.values().sum::<usize>(),
        stats.rejected,
        stats.retained
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().unwrap();
}
