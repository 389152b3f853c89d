//! Tokenization and vocabulary.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub max_size: usize,
    pub min_count: usize,
    pub max_len: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            max_size: 10_000,
            min_count: 2,
            max_len: 20,
        }
    }
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Token/id bijection. Ids 0..4 are the special tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut id_to_token: Vec<String> = SPECIALS.iter().map(|s| (*s).to_owned()).collect();
        id_to_token.extend(tokens);
        let token_to_id = id_to_token.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            token_to_id,
            id_to_token,
        }
    }

    /// Builds a vocabulary ranked by descending frequency, ties broken
    /// lexicographically.
    pub fn build<I, S>(corpus: I, max_size: usize, min_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[String]>,
    {
        if max_size < SPECIALS.len() + 1 {
            return Err(Error::Config(format!(
                "vocabulary max_size must be >= 5, got {max_size}"
            )));
        }
        if min_count < 1 {
            return Err(Error::Config("vocabulary min_count must be >= 1".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let corpus: Vec<S> = corpus.into_iter().collect();
        for seq in &corpus {
            for tok in seq.as_ref() {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count && !SPECIALS.contains(&t))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - SPECIALS.len());
        Ok(Self::from_tokens(ranked.into_iter().map(|(t, _)| t.to_owned())))
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// `[BOS] ids [EOS]`, truncated so the whole sequence fits `max_len`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], max_len: usize) -> Vec<usize> {
        let max_len = max_len.max(3);
        let mut ids = Vec::with_capacity(tokens.len().min(max_len - 2) + 2);
        ids.push(BOS);
        ids.extend(
            tokens
                .iter()
                .take(max_len - 2)
                .map(|t| self.id(t.as_ref()).unwrap_or(UNK)),
        );
        ids.push(EOS);
        ids
    }

    /// Inverse of [`encode`](Self::encode) for in-vocabulary tokens; special
    /// ids are dropped.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id >= SPECIALS.len())
            .filter_map(|&id| self.token(id).map(str::to_owned))
            .collect()
    }

    /// File form: one token per line, line number = id.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.id_to_token {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let tokens: Vec<&str> = text.lines().collect();
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Config(
                "vocabulary file must start with the special tokens".into(),
            ));
        }
        let vocab = Self::from_tokens(tokens[SPECIALS.len()..].iter().map(|t| (*t).to_owned()));
        if vocab.token_to_id.len() != vocab.id_to_token.len() {
            return Err(Error::Config("vocabulary file contains duplicate tokens".into()));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// SHA-256 of the file form; binds checkpoints to their vocabulary.
    pub fn content_hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| (*t).to_owned()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Convert String to int"),
            toks(&["convert", "string", "to", "int"])
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("read-write I/O"), toks(&["read", "write", "i", "o"]));
    }

    #[test]
    fn build_examples() {
        let v = Vocabulary::build([toks(&["a", "b"]), toks(&["a"])], 10, 1).unwrap();
        assert_eq!(v.id("a"), Some(4));
        assert_eq!(v.id("b"), Some(5));
        assert_eq!(v.len(), 6);

        let v = Vocabulary::build(Vec::<Vec<String>>::new(), 10, 1).unwrap();
        assert_eq!(v.len(), 4);

        let v = Vocabulary::build([toks(&["y", "x"]), toks(&["x", "y"])], 10, 1).unwrap();
        assert!(v.id("x").unwrap() < v.id("y").unwrap());
    }

    #[test]
    fn min_count_and_max_size() {
        let corpus = [toks(&["a", "a", "a", "b", "b", "c"])];
        let v = Vocabulary::build(&corpus, 10, 2).unwrap();
        assert_eq!(v.id("c"), None);
        let v = Vocabulary::build(&corpus, 5, 1).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("a"), Some(4));
        assert!(Vocabulary::build(&corpus, 4, 1).is_err());
    }

    #[test]
    fn encode_examples() {
        let v = Vocabulary::build([toks(&["a"])], 10, 1).unwrap();
        assert_eq!(v.encode(&["a"], 20), vec![1, 4, 2]);
        assert_eq!(v.encode(&["zzz"], 20), vec![1, 3, 2]);
        let long: Vec<&str> = vec!["a"; 50];
        let ids = v.encode(&long, 10);
        assert_eq!(ids.len(), 10);
        assert_eq!(ids[0], BOS);
        assert_eq!(*ids.last().unwrap(), EOS);
        assert_eq!(v.encode::<&str>(&[], 10), vec![BOS, EOS]);
    }

    #[test]
    fn text_round_trip() {
        let v = Vocabulary::build([toks(&["sort", "list", "sort"])], 10, 1).unwrap();
        let text = v.to_text();
        assert_eq!(text.lines().count(), v.len());
        assert_eq!(Vocabulary::from_text(&text).unwrap(), v);
        assert!(Vocabulary::from_text("a\nb\n").is_err());
    }
}
