//! Pipeline stages as file-to-file commands, plus the `querysift` argument
//! parser. Every stage is callable from the library; the binary is a thin
//! wrapper around [`main_with_args`].

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, ProvenanceEntry, Record, Stage};
use crate::error::{Error, Result};
use crate::metrics;
use crate::rules::{Outcome, RuleKind, Ruleset, RulesetConfig};
use crate::textenc::{self, TokenizerConfig, Vocabulary};
use crate::threshold::{self, EmOptions, Strategy};
use crate::vae::{self, VaeConfig};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_EMPTY_CORPUS: i32 = 3;
pub const EXIT_VOCAB_MISMATCH: i32 = 4;
pub const EXIT_MISSING_SCORE: i32 = 5;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::MalformedLine { .. } | Error::MissingField { .. } | Error::DuplicateId { .. } => {
            EXIT_IO
        }
        Error::EmptyCorpus => EXIT_EMPTY_CORPUS,
        Error::VocabMismatch => EXIT_VOCAB_MISMATCH,
        Error::MissingScore(_) => EXIT_MISSING_SCORE,
        _ => EXIT_FAILURE,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    /// `gmm`, `kmeans2` or `percentile(p)`.
    pub strategy: String,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        let em = EmOptions::default();
        ThresholdConfig {
            strategy: "gmm".into(),
            max_iter: em.max_iter,
            tol: em.tol,
        }
    }
}

impl ThresholdConfig {
    pub fn strategy(&self) -> Result<Strategy> {
        self.strategy.parse()
    }

    pub fn em_options(&self) -> EmOptions {
        EmOptions {
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub input: Option<PathBuf>,
    /// Prepared query corpus, one query per line.
    pub bootstrap: Option<PathBuf>,
    /// Raw question titles; when set, `run` prepares the query corpus itself.
    pub titles: Option<PathBuf>,
    /// Directory for stage outputs not given an explicit path.
    pub work_dir: Option<PathBuf>,
    /// Final retained records.
    pub retained: Option<PathBuf>,
    /// Records rejected by the semantic stage.
    pub rejects: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub vocabulary: Option<PathBuf>,
}

impl PathsConfig {
    /// Makes relative paths relative to `base` (the config file's directory).
    pub fn resolve_against(&mut self, base: &Path) {
        for p in [
            &mut self.input,
            &mut self.bootstrap,
            &mut self.titles,
            &mut self.work_dir,
            &mut self.retained,
            &mut self.rejects,
            &mut self.checkpoint,
            &mut self.vocabulary,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Contents of the TOML configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Overrides `vae.seed` when present.
    pub seed: Option<u64>,
    pub rules: RulesetConfig,
    pub tokenizer: TokenizerConfig,
    pub vae: VaeConfig,
    pub threshold: ThresholdConfig,
    pub paths: PathsConfig,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            config.paths.resolve_against(base);
        }
        Ok(config)
    }

    pub fn ruleset(&self) -> Result<Ruleset> {
        Ruleset::from_config(&self.rules)
    }

    /// VAE settings with the shared seed and sequence cap applied.
    pub fn vae_config(&self) -> VaeConfig {
        let mut cfg = self.vae.clone();
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.max_len = self.tokenizer.max_len;
        cfg
    }

    pub fn work_dir(&self) -> PathBuf {
        self.paths
            .work_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("querysift-out"))
    }
}

/// Where diagnostics go. Data never goes here.
#[derive(Debug, Clone, Copy, Default)]
pub struct Diag {
    pub quiet: bool,
}

impl Diag {
    pub fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn write_json(value: &impl Serialize, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

// ---------------------------------------------------------------- rule filter

/// One row of the rule-stage statistics, in configured rule order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleStatsRow {
    pub rule: String,
    pub kind: RuleKind,
    pub enabled: bool,
    /// Records this transform changed (including ones rejected later).
    pub modified: usize,
    /// Records this reject rule discarded.
    pub discarded: usize,
    /// Records still retained after this row.
    pub retained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleFilterStats {
    pub input: usize,
    /// Comments shortened by first-sentence extraction.
    pub extracted: usize,
    pub rules: Vec<RuleStatsRow>,
    pub retained: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleFilterOutput {
    pub retained: Vec<Record>,
    pub rejects: Vec<Record>,
    pub stats: RuleFilterStats,
}

/// First-sentence extraction followed by the ruleset, with provenance.
pub fn filter_record(mut record: Record, ruleset: &Ruleset) -> (Record, Outcome) {
    let first = corpus::extract_first_sentence(&record.comment);
    if first != record.comment {
        record.provenance.push(ProvenanceEntry::transformed(
            Stage::Extract,
            None,
            &record.comment,
            &first,
        ));
    }
    let outcome = ruleset.apply(&first);
    for step in outcome.steps() {
        record.provenance.push(ProvenanceEntry::transformed(
            Stage::Rule,
            Some(&step.rule_id),
            &step.before,
            &step.after,
        ));
    }
    record.comment = match &outcome {
        Outcome::Rejected { rule_id, steps } => {
            record
                .provenance
                .push(ProvenanceEntry::rejected(Stage::Rule, Some(rule_id)));
            steps.last().map(|s| s.after.clone()).unwrap_or(first)
        }
        Outcome::Kept { text } | Outcome::Transformed { text, .. } => {
            record.provenance.push(ProvenanceEntry::retained(Stage::Rule));
            text.clone()
        }
    };
    (record, outcome)
}

pub fn rule_filter(records: Vec<Record>, ruleset: &Ruleset) -> RuleFilterOutput {
    let input = records.len();
    let results: Vec<(Record, Outcome)> = records.into_par_iter().map(|r| filter_record(r, ruleset)).collect();

    let mut modified: HashMap<&str, usize> = HashMap::new();
    let mut discarded: HashMap<String, usize> = HashMap::new();
    let mut extracted = 0;
    let mut retained = Vec::new();
    let mut rejects = Vec::new();
    for (record, outcome) in results {
        if record.provenance.first().is_some_and(|p| p.stage == Stage::Extract) {
            extracted += 1;
        }
        let mut seen: Vec<&str> = Vec::new();
        for step in outcome.steps() {
            if let Some(rule) = ruleset.rules().iter().find(|r| r.id() == step.rule_id) {
                if !seen.contains(&rule.id()) {
                    seen.push(rule.id());
                    *modified.entry(rule.id()).or_default() += 1;
                }
            }
        }
        match outcome {
            Outcome::Rejected { rule_id, .. } => {
                *discarded.entry(rule_id).or_default() += 1;
                rejects.push(record);
            }
            _ => retained.push(record),
        }
    }

    let mut running = input;
    let rows = ruleset
        .rules()
        .iter()
        .map(|rule| {
            let d = discarded.get(rule.id()).copied().unwrap_or(0);
            running -= d;
            RuleStatsRow {
                rule: rule.id().to_owned(),
                kind: rule.kind(),
                enabled: rule.enabled(),
                modified: modified.get(rule.id()).copied().unwrap_or(0),
                discarded: d,
                retained: running,
            }
        })
        .collect();
    let stats = RuleFilterStats {
        input,
        extracted,
        rules: rows,
        retained: retained.len(),
        rejected: rejects.len(),
    };
    RuleFilterOutput {
        retained,
        rejects,
        stats,
    }
}

pub struct RuleFilterPaths<'a> {
    pub retained: &'a Path,
    pub rejects: &'a Path,
    pub stats: &'a Path,
}

pub fn cmd_rule_filter(
    input: &Path,
    ruleset: &Ruleset,
    out: &RuleFilterPaths<'_>,
    diag: Diag,
) -> Result<RuleFilterStats> {
    let records = corpus::read_jsonl_all(input)?;
    let result = rule_filter(records, ruleset);
    for p in [out.retained, out.rejects, out.stats] {
        ensure_parent(p)?;
    }
    corpus::write_jsonl(&result.retained, out.retained)?;
    corpus::write_jsonl(&result.rejects, out.rejects)?;
    write_json(&result.stats, out.stats)?;
    diag.note(format!(
        "rule-filter: {} in, {} retained, {} rejected",
        result.stats.input, result.stats.retained, result.stats.rejected
    ));
    for row in &result.stats.rules {
        diag.note(format!(
            "  {:<16} modified {:>8} discarded {:>8} retained {:>8}",
            row.rule, row.modified, row.discarded, row.retained
        ));
    }
    Ok(result.stats)
}

// ------------------------------------------------------------------ bootstrap

pub fn cmd_bootstrap(titles: &Path, ruleset: &Ruleset, output: &Path, diag: Diag) -> Result<corpus::BootstrapStats> {
    let text = fs::read_to_string(titles).map_err(|e| Error::io(titles, e))?;
    let (queries, stats) = corpus::prepare_bootstrap(text.lines(), ruleset);
    ensure_parent(output)?;
    let mut body = queries.join("\n");
    if !body.is_empty() {
        body.push('\n');
    }
    fs::write(output, body).map_err(|e| Error::io(output, e))?;
    diag.note(format!(
        "bootstrap: {} titles, {} not \"how to\", {} rejected by rules, {} queries",
        stats.total,
        stats.not_how_to,
        stats.rejected.values().sum::<usize>(),
        stats.retained
    ));
    Ok(stats)
}

// ---------------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub o_w: usize,
    pub sequences: usize,
    pub report: vae::TrainReport,
}

pub fn read_queries(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

/// Builds the vocabulary from the query corpus, trains, and writes the
/// checkpoint and vocabulary file.
pub fn cmd_train(
    bootstrap: &Path,
    tokenizer: &TokenizerConfig,
    vae_config: &VaeConfig,
    checkpoint: &Path,
    vocab_path: &Path,
    diag: Diag,
) -> Result<TrainSummary> {
    let queries = read_queries(bootstrap)?;
    let tokens: Vec<Vec<String>> = queries
        .iter()
        .map(|q| textenc::tokenize(q))
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = Vocabulary::build(&tokens, tokenizer.max_size, tokenizer.min_count)?;
    let mut cfg = vae_config.clone();
    cfg.o_w = vocab.len();
    cfg.max_len = tokenizer.max_len;
    let encoded: Vec<Vec<usize>> = tokens.iter().map(|t| vocab.encode(t, cfg.max_len)).collect();
    diag.note(format!(
        "train: {} sequences, vocabulary {} tokens, d={} h={} z={}",
        encoded.len(),
        vocab.len(),
        cfg.d,
        cfg.h_dim,
        cfg.z_dim
    ));
    let (params, report) = vae::train_with_progress(&encoded, &cfg, |e| {
        diag.note(format!(
            "epoch {:>3}  ce {:.4}  kl {:.4}  total {:.4}  {:.1}s",
            e.epoch, e.ce, e.kl, e.total, e.seconds
        ));
    })?;
    ensure_parent(checkpoint)?;
    ensure_parent(vocab_path)?;
    vocab.save(vocab_path)?;
    vae::save_checkpoint(&params, &cfg, vocab.content_hash(), checkpoint)?;
    Ok(TrainSummary {
        o_w: vocab.len(),
        sequences: encoded.len(),
        report,
    })
}

// ---------------------------------------------------------------------- score

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub scored: usize,
    /// Comments with no tokens at all (scored on BOS/EOS alone).
    pub empty: usize,
    /// Comments containing at least one out-of-vocabulary token.
    pub with_unknown: usize,
}

/// Adds a reconstruction-loss score to every record, preserving order.
pub fn score_records(
    records: &mut [Record],
    params: &vae::VaeParams,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<ScoreSummary> {
    let results: Vec<Result<(f64, bool, bool)>> = records
        .par_iter()
        .map(|r| {
            let tokens = textenc::tokenize(&r.comment);
            let ids = vocab.encode(&tokens, max_len);
            let unk = ids.contains(&textenc::UNK);
            Ok((vae::reconstruction_loss(params, &ids)?, tokens.is_empty(), unk))
        })
        .collect();
    let mut summary = ScoreSummary::default();
    for (record, res) in records.iter_mut().zip(results) {
        let (score, empty, unk) = res?;
        record.score = Some(score);
        summary.scored += 1;
        summary.empty += usize::from(empty);
        summary.with_unknown += usize::from(unk);
    }
    Ok(summary)
}

pub fn cmd_score(
    input: &Path,
    checkpoint: &Path,
    vocab_path: &Path,
    output: &Path,
    diag: Diag,
) -> Result<ScoreSummary> {
    let vocab = Vocabulary::load(vocab_path)?;
    let (params, cfg) = vae::load_checkpoint(checkpoint, &vocab)?;
    let mut records = corpus::read_jsonl_all(input)?;
    let summary = score_records(&mut records, &params, &vocab, cfg.max_len)?;
    ensure_parent(output)?;
    corpus::write_jsonl(&records, output)?;
    diag.note(format!(
        "score: {} records, {} empty after tokenization, {} with unknown tokens",
        summary.scored, summary.empty, summary.with_unknown
    ));
    Ok(summary)
}

// ------------------------------------------------------------------ partition

pub struct PartitionPaths<'a> {
    pub retained: &'a Path,
    pub rejects: &'a Path,
    pub report: &'a Path,
}

/// Splits scored records; returns (retained, rejects, report).
pub fn partition_records(
    records: Vec<Record>,
    strategy: Strategy,
    opts: EmOptions,
) -> Result<(Vec<Record>, Vec<Record>, threshold::PartitionReport)> {
    let scored: Vec<(String, f64)> = records
        .iter()
        .map(|r| {
            r.score
                .map(|s| (r.id.clone(), s))
                .ok_or_else(|| Error::MissingScore(r.id.clone()))
        })
        .collect::<Result<_>>()?;
    let split = threshold::partition(&scored, strategy, opts)?;
    let keep: std::collections::HashSet<&str> = split.retained.iter().map(String::as_str).collect();
    let (mut retained, mut rejects): (Vec<Record>, Vec<Record>) =
        records.into_iter().partition(|r| keep.contains(r.id.as_str()));
    for r in &mut retained {
        r.provenance.push(ProvenanceEntry::retained(Stage::Semantic));
    }
    for r in &mut rejects {
        r.provenance.push(ProvenanceEntry::rejected(Stage::Semantic, None));
    }
    Ok((retained, rejects, split.report))
}

pub fn cmd_partition(
    input: &Path,
    strategy: Strategy,
    opts: EmOptions,
    strip_provenance: bool,
    out: &PartitionPaths<'_>,
    diag: Diag,
) -> Result<threshold::PartitionReport> {
    let records = corpus::read_jsonl_all(input)?;
    let (mut retained, rejects, report) = partition_records(records, strategy, opts)?;
    if strip_provenance {
        retained.iter_mut().for_each(|r| r.provenance.clear());
    }
    for p in [out.retained, out.rejects, out.report] {
        ensure_parent(p)?;
    }
    corpus::write_jsonl(&retained, out.retained)?;
    corpus::write_jsonl(&rejects, out.rejects)?;
    write_json(&report, out.report)?;
    diag.note(format!(
        "partition ({}): {} of {} retained ({:.1}%), threshold {}",
        report.strategy,
        report.retained,
        report.total,
        100.0 * report.retained_fraction,
        report.threshold.map_or("-".to_owned(), |t| format!("{t:.4}"))
    ));
    Ok(report)
}

// ------------------------------------------------------------------------ run

/// File names of every stage output inside the work directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub rule_retained: PathBuf,
    pub rule_rejects: PathBuf,
    pub rule_stats: PathBuf,
    pub queries: PathBuf,
    pub vocab: PathBuf,
    pub checkpoint: PathBuf,
    pub scored: PathBuf,
    pub retained: PathBuf,
    pub semantic_rejects: PathBuf,
    pub report: PathBuf,
}

impl RunLayout {
    /// Work-directory layout with any explicit `[paths]` entries applied.
    pub fn for_config(dir: &Path, paths: &PathsConfig) -> Self {
        let mut layout = RunLayout::new(dir);
        let set = |slot: &mut PathBuf, p: &Option<PathBuf>| {
            if let Some(p) = p {
                *slot = p.clone();
            }
        };
        set(&mut layout.retained, &paths.retained);
        set(&mut layout.semantic_rejects, &paths.rejects);
        set(&mut layout.checkpoint, &paths.checkpoint);
        set(&mut layout.vocab, &paths.vocabulary);
        layout
    }

    pub fn new(dir: &Path) -> Self {
        RunLayout {
            rule_retained: dir.join("rule_retained.jsonl"),
            rule_rejects: dir.join("rule_rejects.jsonl"),
            rule_stats: dir.join("rule_stats.json"),
            queries: dir.join("queries.txt"),
            vocab: dir.join("vocab.txt"),
            checkpoint: dir.join("model.qdva"),
            scored: dir.join("scored.jsonl"),
            retained: dir.join("retained.jsonl"),
            semantic_rejects: dir.join("semantic_rejects.jsonl"),
            report: dir.join("partition_report.json"),
        }
    }
}

pub struct RunInputs<'a> {
    pub input: &'a Path,
    /// Prepared query corpus, used when `titles` is `None`.
    pub bootstrap: Option<&'a Path>,
    pub titles: Option<&'a Path>,
    pub work_dir: &'a Path,
    /// Skip stages whose outputs already exist.
    pub resume: bool,
    pub strip_provenance: bool,
}

/// Runs every stage, writing each stage's output into the work directory.
pub fn cmd_run(inputs: &RunInputs<'_>, config: &PipelineConfig, diag: Diag) -> Result<RunLayout> {
    let layout = RunLayout::for_config(inputs.work_dir, &config.paths);
    fs::create_dir_all(inputs.work_dir).map_err(|e| Error::io(inputs.work_dir, e))?;
    let done = |paths: &[&PathBuf]| inputs.resume && paths.iter().all(|p| p.exists());
    let ruleset = config.ruleset()?;

    if done(&[&layout.rule_retained, &layout.rule_rejects, &layout.rule_stats]) {
        diag.note("rule-filter: outputs present, skipping");
    } else {
        cmd_rule_filter(
            inputs.input,
            &ruleset,
            &RuleFilterPaths {
                retained: &layout.rule_retained,
                rejects: &layout.rule_rejects,
                stats: &layout.rule_stats,
            },
            diag,
        )?;
    }

    let queries = match (inputs.titles, inputs.bootstrap) {
        (Some(titles), _) => {
            if !done(&[&layout.queries]) {
                let rs = bootstrap_ruleset(config)?;
                cmd_bootstrap(titles, &rs, &layout.queries, diag)?;
            }
            layout.queries.clone()
        }
        (None, Some(b)) => b.to_path_buf(),
        (None, None) => {
            return Err(Error::Config(
                "run needs a query corpus (--bootstrap or --titles)".into(),
            ))
        }
    };

    if done(&[&layout.checkpoint, &layout.vocab]) {
        diag.note("train: checkpoint present, skipping");
    } else {
        cmd_train(
            &queries,
            &config.tokenizer,
            &config.vae_config(),
            &layout.checkpoint,
            &layout.vocab,
            diag,
        )?;
    }

    if done(&[&layout.scored]) {
        diag.note("score: outputs present, skipping");
    } else {
        cmd_score(
            &layout.rule_retained,
            &layout.checkpoint,
            &layout.vocab,
            &layout.scored,
            diag,
        )?;
    }

    cmd_partition(
        &layout.scored,
        config.threshold.strategy()?,
        config.threshold.em_options(),
        inputs.strip_provenance,
        &PartitionPaths {
            retained: &layout.retained,
            rejects: &layout.semantic_rejects,
            report: &layout.report,
        },
        diag,
    )?;
    Ok(layout)
}

// ------------------------------------------------------------------ arguments

#[derive(Debug, Parser)]
#[command(
    name = "querysift",
    version,
    about = "Clean comment-code corpora into query-like pairs"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic component (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Suppress diagnostics on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RuleArgs {
    /// Disable a rule by id (repeatable).
    #[arg(long = "disable-rule", value_name = "ID")]
    pub disable: Vec<String>,
    /// Ruleset file (`[[rule]]` tables) replacing the config's rules section.
    #[arg(long)]
    pub ruleset: Option<PathBuf>,
}

impl RuleArgs {
    fn apply(&self, config: &mut PipelineConfig) -> Result<()> {
        if let Some(path) = &self.ruleset {
            config.rules = RulesetConfig::load(path)?;
        }
        for id in &self.disable {
            match config.rules.rules.iter_mut().find(|r| &r.id == id) {
                Some(entry) => entry.enabled = false,
                None => return Err(Error::UnknownRule(id.clone())),
            }
        }
        Ok(())
    }
}

// Output paths left unset fall back to `[paths]` in the config, then to the
// work-directory layout used by `run`.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Syntactic filter: first-sentence extraction plus the ruleset.
    RuleFilter {
        input: Option<PathBuf>,
        #[arg(long)]
        retained: Option<PathBuf>,
        #[arg(long)]
        rejects: Option<PathBuf>,
        #[arg(long)]
        stats: Option<PathBuf>,
        #[command(flatten)]
        rules: RuleArgs,
    },
    /// Turn "how to" question titles into a query corpus.
    Bootstrap {
        titles: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        rules: RuleArgs,
    },
    /// Train the VAE on a query corpus.
    Train {
        bootstrap: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Add reconstruction-loss scores to records.
    Score {
        input: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Split scored records into retained and rejected sets.
    Partition {
        input: Option<PathBuf>,
        #[arg(long)]
        retained: Option<PathBuf>,
        #[arg(long)]
        rejects: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// gmm, kmeans2 or percentile(p)
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        strip_provenance: bool,
    },
    /// All stages end to end.
    Run {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        bootstrap: Option<PathBuf>,
        #[arg(long)]
        titles: Option<PathBuf>,
        #[arg(long)]
        work_dir: Option<PathBuf>,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Skip stages whose outputs already exist.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        strip_provenance: bool,
        #[command(flatten)]
        rules: RuleArgs,
    },
    /// MRR and Answered@k from a rank file.
    Metrics {
        ranks: PathBuf,
        #[arg(long = "k", default_values_t = [1u32, 5, 10])]
        k: Vec<u32>,
    },
    /// Sample size for manual inspection.
    SampleSize {
        #[arg(long)]
        population: u64,
        #[arg(long, default_value_t = 1.96)]
        z: f64,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 0.05)]
        c: f64,
    },
}

fn required(opt: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    opt.ok_or_else(|| Error::Config(format!("no {what} given (argument or [paths] entry)")))
}

fn bootstrap_ruleset(config: &PipelineConfig) -> Result<Ruleset> {
    let rs = config.ruleset()?;
    if rs.contains(crate::rules::ids::INTERROGATION) {
        rs.with_enabled(crate::rules::ids::INTERROGATION, false)
    } else {
        Ok(rs)
    }
}

/// Runs one parsed command, writing any data output to `stdout`.
pub fn execute(cli: Cli, stdout: &mut dyn std::io::Write) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    let diag = Diag { quiet: cli.quiet };
    let layout = RunLayout::for_config(&config.work_dir(), &config.paths);
    let io = |e: std::io::Error| Error::io("<stdout>", e);

    match cli.command {
        Command::RuleFilter {
            input,
            retained,
            rejects,
            stats,
            rules,
        } => {
            rules.apply(&mut config)?;
            let input = required(input.or(config.paths.input.clone()), "input")?;
            cmd_rule_filter(
                &input,
                &config.ruleset()?,
                &RuleFilterPaths {
                    retained: &retained.unwrap_or(layout.rule_retained),
                    rejects: &rejects.unwrap_or(layout.rule_rejects),
                    stats: &stats.unwrap_or(layout.rule_stats),
                },
                diag,
            )?;
        }
        Command::Bootstrap { titles, output, rules } => {
            rules.apply(&mut config)?;
            let titles = required(titles.or(config.paths.titles.clone()), "titles file")?;
            let output = output.or(config.paths.bootstrap.clone()).unwrap_or(layout.queries);
            cmd_bootstrap(&titles, &bootstrap_ruleset(&config)?, &output, diag)?;
        }
        Command::Train {
            bootstrap,
            checkpoint,
            vocab,
            epochs,
        } => {
            let mut vae_cfg = config.vae_config();
            if let Some(e) = epochs {
                vae_cfg.epochs = e;
            }
            let bootstrap = required(bootstrap.or(config.paths.bootstrap.clone()), "query corpus")?;
            let summary = cmd_train(
                &bootstrap,
                &config.tokenizer,
                &vae_cfg,
                &checkpoint.unwrap_or(layout.checkpoint),
                &vocab.unwrap_or(layout.vocab),
                diag,
            )?;
            diag.note(format!("train: vocabulary size o_w = {}", summary.o_w));
        }
        Command::Score {
            input,
            checkpoint,
            vocab,
            output,
        } => {
            cmd_score(
                &input.unwrap_or(layout.rule_retained),
                &checkpoint.unwrap_or(layout.checkpoint),
                &vocab.unwrap_or(layout.vocab),
                &output.unwrap_or(layout.scored),
                diag,
            )?;
        }
        Command::Partition {
            input,
            retained,
            rejects,
            report,
            strategy,
            strip_provenance,
        } => {
            let strategy = match strategy {
                Some(s) => s.parse()?,
                None => config.threshold.strategy()?,
            };
            cmd_partition(
                &input.unwrap_or(layout.scored),
                strategy,
                config.threshold.em_options(),
                strip_provenance,
                &PartitionPaths {
                    retained: &retained.unwrap_or(layout.retained),
                    rejects: &rejects.unwrap_or(layout.semantic_rejects),
                    report: &report.unwrap_or(layout.report),
                },
                diag,
            )?;
        }
        Command::Run {
            input,
            bootstrap,
            titles,
            work_dir,
            strategy,
            epochs,
            resume,
            strip_provenance,
            rules,
        } => {
            rules.apply(&mut config)?;
            if let Some(s) = strategy {
                config.threshold.strategy = s;
            }
            if let Some(e) = epochs {
                config.vae.epochs = e;
            }
            let input = required(input.or(config.paths.input.clone()), "input")?;
            let bootstrap = bootstrap.or(config.paths.bootstrap.clone());
            let titles = titles.or(config.paths.titles.clone());
            let work_dir = work_dir.unwrap_or_else(|| config.work_dir());
            let layout = cmd_run(
                &RunInputs {
                    input: &input,
                    bootstrap: bootstrap.as_deref(),
                    titles: titles.as_deref(),
                    work_dir: &work_dir,
                    resume,
                    strip_provenance,
                },
                &config,
                diag,
            )?;
            diag.note(format!("run: final retained set at {}", layout.retained.display()));
        }
        Command::Metrics { ranks, k } => {
            let entries = metrics::read_rank_file(&ranks)?;
            let ranks: Vec<Option<u32>> = entries.iter().map(|e| e.rank).collect();
            let answered: serde_json::Map<String, serde_json::Value> = k
                .iter()
                .map(|&k| (k.to_string(), metrics::answered_at_k(&ranks, k).into()))
                .collect();
            let out = serde_json::json!({
                "queries": ranks.len(),
                "mrr": metrics::mrr(&ranks)?,
                "answered_at": answered,
            });
            writeln!(stdout, "{out}").map_err(io)?;
        }
        Command::SampleSize { population, z, p, c } => {
            if population == 0 || !(p > 0.0 && p < 1.0) || c <= 0.0 {
                return Err(Error::Config("need population >= 1, 0 < p < 1, c > 0".into()));
            }
            writeln!(stdout, "{}", metrics::sample_size(population, z, p, c)).map_err(io)?;
        }
    }
    Ok(())
}

/// Entry point used by the binary. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_FAILURE } else { 0 };
        }
    };
    if let Some(jobs) = cli.jobs {
        // Fails only if a global pool already exists, in which case keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let started = Instant::now();
    let quiet = cli.quiet;
    let mut stdout = std::io::stdout().lock();
    match execute(cli, &mut stdout) {
        Ok(()) => {
            if !quiet {
                eprintln!("done in {:.1}s", started.elapsed().as_secs_f64());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
