use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed JSON: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("line {line}: missing required field \"{field}\"")]
    MissingField { line: usize, field: &'static str },

    #[error("line {line}: duplicate id \"{id}\"")]
    DuplicateId { line: usize, id: String },

    #[error("duplicate rule id \"{0}\"")]
    DuplicateRule(String),

    #[error("unknown rule id \"{0}\"")]
    UnknownRule(String),

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: usize, size: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty training corpus")]
    EmptyCorpus,

    #[error("non-finite loss at training step {step} (epoch {epoch})")]
    NonFiniteLoss { step: usize, epoch: usize },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("model/vocabulary mismatch")]
    VocabMismatch,

    #[error("{0}; use the percentile strategy for small or degenerate score sets")]
    DegenerateScores(String),

    #[error("percentile must lie in (0, 1], got {0}")]
    InvalidPercentile(f64),

    #[error("record \"{0}\" has no score")]
    MissingScore(String),

    #[error("metrics need at least one query")]
    EmptyRanks,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
