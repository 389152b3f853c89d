//! Syntactic cleaning of raw comments: first-sentence extraction, the
//! default ruleset, a custom rule, and per-rule statistics.
//!
//! cargo run --example rule_filter

use querysift::cli::rule_filter;
use querysift::corpus::{self, extract_first_sentence};
use querysift::rules::{Outcome, Rule, Ruleset};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

pub fn run() -> querysift::Result<()> {
    let rs = Ruleset::default();
    for comment in [
        "<p>Parses a csv file into rows.</p> Blank lines are skipped.",
        "(TODO) Send requests",
        "Returns a {@link Support}",
        "Is this a name declaration?",
        "Converts a string to an int.",
    ] {
        let first = extract_first_sentence(comment);
        match rs.apply(&first) {
            Outcome::Kept { text } => println!("kept         {text:?}"),
            Outcome::Transformed { text, steps } => {
                let ids: Vec<_> = steps.iter().map(|s| s.rule_id.as_str()).collect();
                println!("transformed  {text:?} via {ids:?}");
            }
            Outcome::Rejected { rule_id, .. } => println!("rejected     {first:?} by {rule_id}"),
        }
    }

    // Custom rules go in through the library, after the built-ins of the same kind.
    let rs = rs.register(Rule::reject("auto_generated", |t| {
        t.to_lowercase().contains("auto-generated")
    }))?;
    let records = corpus::read_jsonl_all(format!("{FIXTURES}/comments.jsonl"))?;
    let out = rule_filter(records, &rs);
    println!(
        "\n{:<16} {:>9} {:>9} {:>9}",
        "rule", "modified", "discarded", "retained"
    );
    for row in &out.stats.rules {
        println!(
            "{:<16} {:>9} {:>9} {:>9}",
            row.rule, row.modified, row.discarded, row.retained
        );
    }
    println!("{} of {} records retained", out.stats.retained, out.stats.input);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().unwrap();
}
