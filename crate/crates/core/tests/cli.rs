use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use querysift::cli::{self, Diag, PartitionPaths};
use querysift::corpus::{self, Record};
use querysift::threshold::{EmOptions, Strategy};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_querysift");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn querysift(args: &[&str]) -> Output {
    Command::new(BIN).arg("--quiet").args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ids(path: &Path) -> Vec<String> {
    corpus::read_jsonl_all(path)
        .unwrap()
        .into_iter()
        .map(|r| r.id)
        .collect()
}

fn run_toy(work: &Path) -> Output {
    querysift(&[
        "--config",
        s(&fixture("toy.toml")),
        "run",
        "--epochs",
        "4",
        "--work-dir",
        s(work),
    ])
}

#[test]
fn run_end_to_end_on_toy_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_toy(dir.path());
    ok(&out);
    let retained = ids(&dir.path().join("retained.jsonl"));
    assert!(!retained.is_empty());

    // Every input record lands in exactly one of the three outputs.
    let mut seen: Vec<String> = retained;
    seen.extend(ids(&dir.path().join("rule_rejects.jsonl")));
    seen.extend(ids(&dir.path().join("semantic_rejects.jsonl")));
    let unique: BTreeSet<_> = seen.iter().cloned().collect();
    assert_eq!(unique.len(), seen.len());
    assert_eq!(unique, ids(&fixture("comments.jsonl")).into_iter().collect());

    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("partition_report.json")).unwrap()).unwrap();
    for key in ["pi", "mu_q", "mu_uq"] {
        assert!(report["parameters"][key].is_number(), "{key}");
    }
    assert!(report["threshold"].is_number());
}

#[test]
fn rule_filter_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    fs::write(&input, "").unwrap();
    let (ret, rej, stats) = (dir.path().join("r"), dir.path().join("x"), dir.path().join("s.json"));
    ok(&querysift(&[
        "rule-filter",
        s(&input),
        "--retained",
        s(&ret),
        "--rejects",
        s(&rej),
        "--stats",
        s(&stats),
    ]));
    assert_eq!(fs::read_to_string(&ret).unwrap(), "");
    assert_eq!(fs::read_to_string(&rej).unwrap(), "");
    let stats: Value = serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    for row in stats["rules"].as_array().unwrap() {
        assert_eq!(row["modified"], 0);
        assert_eq!(row["discarded"], 0);
        assert_eq!(row["retained"], 0);
    }
}

#[test]
fn rule_filter_golden_examples() {
    let dir = tempfile::tempdir().unwrap();
    let (ret, rej, stats) = (dir.path().join("r"), dir.path().join("x"), dir.path().join("s.json"));
    let input = fixture("rule_examples.jsonl");
    ok(&querysift(&[
        "rule-filter",
        s(&input),
        "--retained",
        s(&ret),
        "--rejects",
        s(&rej),
        "--stats",
        s(&stats),
    ]));
    // The two transformed comments are two words long, so short_sentence
    // catches them after transformation.
    let rejects = corpus::read_jsonl_all(&rej).unwrap();
    assert_eq!(rejects.len(), 8);
    let transformed: Vec<&Record> = rejects
        .iter()
        .filter(|r| r.provenance.iter().any(|p| p.action == corpus::Action::Transformed))
        .collect();
    assert_eq!(transformed.len(), 2);
    let comments: BTreeSet<&str> = transformed.iter().map(|r| r.comment.as_str()).collect();
    assert_eq!(comments, BTreeSet::from(["parse line", "Send requests"]));
}

#[test]
fn stats_rows_follow_configured_order() {
    let dir = tempfile::tempdir().unwrap();
    let order = [
        "short_sentence",
        "urls",
        "parentheses",
        "interrogation",
        "non_english",
        "html_tags",
        "punctuation",
        "javadoc_tags",
    ];
    let mut toml = String::new();
    for id in order {
        toml.push_str(&format!("[[rules.rule]]\nid = \"{id}\"\n"));
    }
    let config = dir.path().join("c.toml");
    fs::write(&config, toml).unwrap();
    let stats = dir.path().join("s.json");
    ok(&querysift(&[
        "--config",
        s(&config),
        "rule-filter",
        s(&fixture("comments.jsonl")),
        "--retained",
        s(&dir.path().join("r")),
        "--rejects",
        s(&dir.path().join("x")),
        "--stats",
        s(&stats),
    ]));
    let stats: Value = serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    let got: Vec<&str> = stats["rules"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["rule"].as_str().unwrap())
        .collect();
    assert_eq!(got, order);
}

#[test]
fn disabled_rule_keeps_questions() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    fs::write(
        &input,
        "{\"id\":\"a\",\"comment\":\"Is this a name declaration?\",\"code\":\"\"}\n",
    )
    .unwrap();
    let ret = dir.path().join("r");
    let args = |extra: &[&str]| {
        let mut v = vec![
            "rule-filter",
            s(&input),
            "--retained",
            s(&ret),
            "--rejects",
            "/dev/null",
            "--stats",
            "/dev/null",
        ];
        v.extend_from_slice(extra);
        v.into_iter().map(str::to_owned).collect::<Vec<_>>()
    };
    let run = |a: Vec<String>| querysift(&a.iter().map(String::as_str).collect::<Vec<_>>());
    ok(&run(args(&[])));
    assert!(ids(&ret).is_empty());
    ok(&run(args(&["--disable-rule", "interrogation"])));
    assert_eq!(ids(&ret), ["a"]);
    assert_eq!(run(args(&["--disable-rule", "nope"])).status.code(), Some(1));
}

#[test]
fn missing_input_exits_2() {
    let out = querysift(&[
        "rule-filter",
        "/nonexistent/in.jsonl",
        "--retained",
        "a",
        "--rejects",
        "b",
        "--stats",
        "c",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/in.jsonl"));
}

#[test]
fn empty_bootstrap_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.txt");
    fs::write(&q, "\n\n").unwrap();
    let out = querysift(&[
        "train",
        s(&q),
        "--checkpoint",
        s(&dir.path().join("m")),
        "--vocab",
        s(&dir.path().join("v")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
}

fn train_small(dir: &Path, name: &str) -> (PathBuf, PathBuf, Output) {
    let (m, v) = (dir.join(format!("{name}.qdva")), dir.join(format!("{name}.txt")));
    let out = querysift(&[
        "--config",
        s(&fixture("toy.toml")),
        "train",
        s(&fixture("titles.txt")),
        "--epochs",
        "2",
        "--checkpoint",
        s(&m),
        "--vocab",
        s(&v),
    ]);
    (m, v, out)
}

#[test]
fn train_is_deterministic_and_reports_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let (m1, v1, out) = train_small(dir.path(), "a");
    ok(&out);
    let (m2, v2, out) = train_small(dir.path(), "b");
    ok(&out);
    assert_eq!(fs::read(&m1).unwrap(), fs::read(&m2).unwrap());
    assert_eq!(fs::read(&v1).unwrap(), fs::read(&v2).unwrap());

    let vocab = querysift::textenc::Vocabulary::load(&v1).unwrap();
    let ckpt = querysift::vae::read_checkpoint(&m1).unwrap();
    assert_eq!(fs::read_to_string(&v1).unwrap().lines().count(), ckpt.config.o_w);
    assert_eq!(vocab.len(), ckpt.config.o_w);
    assert_eq!(ckpt.config.epochs, 2);
}

#[test]
fn train_prints_one_line_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.txt");
    fs::write(&q, "sort a list\nread a file\n").unwrap();
    let out = Command::new(BIN)
        .args([
            "train",
            s(&q),
            "--epochs",
            "2",
            "--checkpoint",
            s(&dir.path().join("m")),
            "--vocab",
            s(&dir.path().join("v")),
        ])
        .output()
        .unwrap();
    ok(&out);
    assert!(out.stdout.is_empty());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().filter(|l| l.starts_with("epoch")).count(), 2);
}

#[test]
fn score_is_deterministic_and_flags_empty_comments() {
    let dir = tempfile::tempdir().unwrap();
    let (m, v, out) = train_small(dir.path(), "m");
    ok(&out);
    let input = dir.path().join("in.jsonl");
    fs::write(
        &input,
        "{\"id\":\"a\",\"comment\":\"read a text file\",\"code\":\"\"}\n\
         {\"id\":\"b\",\"comment\":\"!!!\",\"code\":\"\"}\n\
         {\"id\":\"c\",\"comment\":\"zebra quantum flux\",\"code\":\"\"}\n",
    )
    .unwrap();
    let (o1, o2) = (dir.path().join("o1"), dir.path().join("o2"));
    for o in [&o1, &o2] {
        let out = Command::new(BIN)
            .args([
                "score",
                s(&input),
                "--checkpoint",
                s(&m),
                "--vocab",
                s(&v),
                "--output",
                s(o),
            ])
            .output()
            .unwrap();
        ok(&out);
        assert!(String::from_utf8_lossy(&out.stderr).contains("1 empty after tokenization"));
    }
    assert_eq!(fs::read(&o1).unwrap(), fs::read(&o2).unwrap());
    let scored = corpus::read_jsonl_all(&o1).unwrap();
    assert_eq!(
        scored.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(),
        ["a", "b", "c"]
    );
    for r in &scored {
        let score = r.score.unwrap();
        assert!(score.is_finite() && score >= 0.0);
    }
}

#[test]
fn score_with_wrong_vocabulary_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _, out) = train_small(dir.path(), "m");
    ok(&out);
    let other = dir.path().join("other.txt");
    fs::write(&other, "<pad>\n<bos>\n<eos>\n<unk>\nfoo\n").unwrap();
    let out = querysift(&[
        "score",
        s(&fixture("comments.jsonl")),
        "--checkpoint",
        s(&m),
        "--vocab",
        s(&other),
        "--output",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn partition_without_scores_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let out = querysift(&[
        "partition",
        s(&fixture("comments.jsonl")),
        "--retained",
        s(&dir.path().join("r")),
        "--rejects",
        s(&dir.path().join("x")),
        "--report",
        s(&dir.path().join("p.json")),
    ]);
    assert_eq!(out.status.code(), Some(5));
}

fn scored_file(dir: &Path, scores: &[f64]) -> PathBuf {
    let path = dir.join("scored.jsonl");
    let records: Vec<Record> = scores
        .iter()
        .enumerate()
        .map(|(i, &sc)| {
            let mut r = Record::new(format!("r{i:05}"), "a comment", "code");
            r.score = Some(sc);
            r
        })
        .collect();
    corpus::write_jsonl(&records, &path).unwrap();
    path
}

#[test]
fn percentile_one_retains_everything() {
    let dir = tempfile::tempdir().unwrap();
    let input = scored_file(dir.path(), &[3.0, 1.0, 2.0, 5.0, 4.0]);
    let ret = dir.path().join("r");
    ok(&querysift(&[
        "partition",
        s(&input),
        "--strategy",
        "percentile(1.0)",
        "--strip-provenance",
        "--retained",
        s(&ret),
        "--rejects",
        s(&dir.path().join("x")),
        "--report",
        s(&dir.path().join("p.json")),
    ]));
    assert_eq!(fs::read(&ret).unwrap(), fs::read(&input).unwrap());
}

#[test]
fn bimodal_scores_retain_the_qualified_weight() {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let (q, uq) = (Normal::new(2.0, 0.3).unwrap(), Normal::new(6.0, 0.5).unwrap());
    let weight = 0.65;
    let n = 4000;
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            if (i as f64) < weight * n as f64 {
                q.sample(&mut rng)
            } else {
                uq.sample(&mut rng)
            }
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let input = scored_file(dir.path(), &scores);
    let report = cli::cmd_partition(
        &input,
        Strategy::Gmm,
        EmOptions::default(),
        false,
        &PartitionPaths {
            retained: &dir.path().join("r"),
            rejects: &dir.path().join("x"),
            report: &dir.path().join("p.json"),
        },
        Diag { quiet: true },
    )
    .unwrap();
    assert!(
        (report.retained_fraction - weight).abs() <= 0.02,
        "{}",
        report.retained_fraction
    );
}

#[test]
fn run_twice_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&run_toy(a.path()));
    ok(&run_toy(b.path()));
    for name in [
        "rule_retained.jsonl",
        "rule_rejects.jsonl",
        "rule_stats.json",
        "queries.txt",
        "vocab.txt",
        "model.qdva",
        "scored.jsonl",
        "retained.jsonl",
        "semantic_rejects.jsonl",
        "partition_report.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn resume_skips_finished_stages() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run_toy(dir.path()));
    let model = fs::read(dir.path().join("model.qdva")).unwrap();
    let out = Command::new(BIN)
        .args([
            "--config",
            s(&fixture("toy.toml")),
            "run",
            "--epochs",
            "1",
            "--resume",
            "--work-dir",
            s(dir.path()),
        ])
        .output()
        .unwrap();
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("train: checkpoint present, skipping"));
    assert_eq!(fs::read(dir.path().join("model.qdva")).unwrap(), model);
}

#[test]
fn metrics_and_sample_size_print_to_stdout() {
    let out = querysift(&["metrics", s(&fixture("ranks.jsonl")), "--k", "1", "--k", "5"]);
    ok(&out);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["mrr"], 0.4375);
    assert_eq!(v["queries"], 4);
    assert_eq!(v["answered_at"]["1"], 1);
    assert_eq!(v["answered_at"]["5"], 3);

    let out = querysift(&["sample-size", "--population", "394471"]);
    ok(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "384");
}

#[test]
fn bootstrap_subcommand_ignores_interrogation() {
    let dir = tempfile::tempdir().unwrap();
    let titles = dir.path().join("t.txt");
    fs::write(
        &titles,
        "How to convert string to int?\nWhy is my loop slow?\nHow to use {@link Foo}\n",
    )
    .unwrap();
    let out_path = dir.path().join("q.txt");
    ok(&querysift(&["bootstrap", s(&titles), "--output", s(&out_path)]));
    assert_eq!(fs::read_to_string(&out_path).unwrap(), "convert string to int\n");
}
