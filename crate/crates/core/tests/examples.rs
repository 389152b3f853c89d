// Runs the cargo examples so they stay working.

#[path = "../examples/bootstrap.rs"]
mod bootstrap;
#[path = "../examples/end_to_end.rs"]
mod end_to_end;
#[path = "../examples/metrics.rs"]
mod metrics;
#[path = "../examples/partition.rs"]
mod partition;
#[path = "../examples/rule_filter.rs"]
mod rule_filter;
#[path = "../examples/train_vae.rs"]
mod train_vae;

#[test]
fn rule_filter_example() {
    rule_filter::run().unwrap();
}

#[test]
fn bootstrap_example() {
    bootstrap::run().unwrap();
}

#[test]
fn train_vae_example() {
    train_vae::run(2).unwrap();
}

#[test]
fn partition_example() {
    partition::run().unwrap();
}

#[test]
fn metrics_example() {
    metrics::run().unwrap();
}

#[test]
fn end_to_end_example() {
    let dir = tempfile::tempdir().unwrap();
    end_to_end::run(dir.path()).unwrap();
    assert!(dir.path().join("retained.jsonl").exists());
}
