//! Cleaning pipeline for comment-based code-search corpora.
//!
//! Comment-code pairs pass through two filters:
//!
//! 1. a syntactic [`rules`] filter that strips detachable noise (HTML tags,
//!    parenthesised asides) and rejects comments with features real search
//!    queries never carry (Javadoc tags, URLs, non-ASCII text, ...);
//! 2. a semantic filter: a GRU variational auto-encoder ([`vae`]) trained on
//!    a corpus of genuine queries scores every surviving comment by its
//!    reconstruction loss, and [`threshold`] splits the scores into a
//!    qualified and an unqualified group with a two-component Gaussian
//!    mixture fitted by EM.
//!
//! [`corpus`] handles record I/O and query-corpus preparation, [`textenc`]
//! tokenization and vocabularies, [`metrics`] retrieval metrics, and [`cli`]
//! wires the stages together behind the `querysift` binary.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod rules;
pub mod textenc;
pub mod threshold;
pub mod vae;

pub use error::{Error, Result};
