//! Comment-code records, JSONL persistence, and query-corpus preparation.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::rules::{Outcome, Ruleset};

/// Pipeline stage that produced a provenance entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Extract,
    Rule,
    Semantic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Transformed,
    Rejected,
    Retained,
}

/// One step in a record's filtering history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<String>,
}

impl ProvenanceEntry {
    pub fn transformed(stage: Stage, rule_id: Option<&str>, before: &str, after: &str) -> Self {
        ProvenanceEntry {
            stage,
            rule_id: rule_id.map(str::to_owned),
            action: Action::Transformed,
            before: Some(before.to_owned()),
            after: Some(after.to_owned()),
        }
    }

    pub fn rejected(stage: Stage, rule_id: Option<&str>) -> Self {
        ProvenanceEntry {
            stage,
            rule_id: rule_id.map(str::to_owned),
            action: Action::Rejected,
            before: None,
            after: None,
        }
    }

    pub fn retained(stage: Stage) -> Self {
        ProvenanceEntry {
            stage,
            rule_id: None,
            action: Action::Retained,
            before: None,
            after: None,
        }
    }
}

/// A comment-code pair. The code is carried through untouched.
///
/// Fields other than the known ones are kept in `extra` so records written
/// back out keep whatever upstream tooling attached to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub comment: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<ProvenanceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Record {
    pub fn new(id: impl Into<String>, comment: impl Into<String>, code: impl Into<String>) -> Self {
        Record {
            id: id.into(),
            comment: comment.into(),
            code: code.into(),
            provenance: Vec::new(),
            score: None,
            extra: Map::new(),
        }
    }
}

/// Streaming JSONL reader. Rejects malformed lines, missing fields and
/// repeated ids, reporting the 1-based line number.
pub struct JsonlReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    seen: HashSet<String>,
    path: Option<std::path::PathBuf>,
}

impl<R: BufRead> JsonlReader<R> {
    pub fn new(reader: R) -> Self {
        JsonlReader {
            lines: reader.lines(),
            line_no: 0,
            seen: HashSet::new(),
            path: None,
        }
    }

    fn parse(&mut self, line: &str) -> Result<Record> {
        let line_no = self.line_no;
        let value: Value = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        let Value::Object(obj) = &value else {
            return Err(Error::MalformedLine {
                line: line_no,
                message: "expected a JSON object".into(),
            });
        };
        for field in ["id", "comment", "code"] {
            match obj.get(field) {
                Some(Value::String(_)) => {}
                Some(_) => {
                    return Err(Error::MalformedLine {
                        line: line_no,
                        message: format!("field \"{field}\" must be a string"),
                    })
                }
                None => return Err(Error::MissingField { line: line_no, field }),
            }
        }
        let record: Record = serde_json::from_value(value).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        if !self.seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId {
                line: line_no,
                id: record.id,
            });
        }
        Ok(record)
    }
}

impl<R: BufRead> Iterator for JsonlReader<R> {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => {
                    let path = self.path.clone().unwrap_or_default();
                    return Some(Err(Error::io(path, e)));
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse(&line));
        }
    }
}

/// Opens a JSONL file of records for streaming.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<JsonlReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = JsonlReader::new(BufReader::new(file));
    reader.path = Some(path.to_path_buf());
    Ok(reader)
}

/// Reads a whole JSONL file into memory.
pub fn read_jsonl_all(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    read_jsonl(path)?.collect()
}

pub fn write_jsonl_to<'a, W: Write>(records: impl IntoIterator<Item = &'a Record>, mut out: W) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Writes records, one JSON object per line.
pub fn write_jsonl<'a>(records: impl IntoIterator<Item = &'a Record>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl_to(records, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Returns the first sentence of a (possibly multi-line) comment.
///
/// Whitespace runs, including newlines, collapse to single spaces. A sentence
/// ends at '.', '!' or '?' followed by whitespace or the end of the text.
/// Comments with no such terminator fall back to their first non-blank line.
pub fn extract_first_sentence(comment: &str) -> String {
    let normalized = collapse_whitespace(comment);
    let mut chars = normalized.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if is_terminator(c) {
            match chars.peek() {
                None => return normalized,
                Some((_, ' ')) => return normalized[..i + c.len_utf8()].to_owned(),
                Some(_) => {}
            }
        }
    }
    comment
        .lines()
        .find(|line| !line.trim().is_empty())
        .map(collapse_whitespace)
        .unwrap_or_default()
}

/// Counters reported while preparing the query corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BootstrapStats {
    pub total: usize,
    pub not_how_to: usize,
    pub rejected: BTreeMap<String, usize>,
    pub retained: usize,
}

fn starts_with_ignore_case(text: &str, prefix: &str) -> bool {
    text.len() >= prefix.len()
        && text.is_char_boundary(prefix.len())
        && text[..prefix.len()].eq_ignore_ascii_case(prefix)
}

/// Strips leading "how to" phrases and trailing question marks until the
/// text is stable. Returns `None` if the text still begins with the letters
/// "how to" glued to another word ("how tokenize ..."), which can be neither
/// stripped nor kept.
fn strip_question_form(text: &str) -> Option<String> {
    let mut current = text.trim().to_owned();
    loop {
        let mut next = current.as_str();
        if starts_with_ignore_case(next, "how to") {
            let rest = &next[6..];
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                next = rest;
            } else {
                return None;
            }
        }
        let next = next.trim().trim_end_matches('?').trim();
        if next == current {
            return Some(current);
        }
        current = next.to_owned();
    }
}

fn is_how_to_title(title: &str) -> bool {
    let t = title.trim_start();
    starts_with_ignore_case(t, "how to") && t[6..].starts_with(char::is_whitespace)
}

/// Turns "how to ..." question titles into declarative queries.
///
/// Titles that do not open with "how to" are dropped and counted. The
/// ruleset should not contain the interrogation rule: every title is a
/// question before its trailing '?' is removed.
pub fn prepare_bootstrap<I, S>(titles: I, ruleset: &Ruleset) -> (Vec<String>, BootstrapStats)
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut stats = BootstrapStats::default();
    let mut out = Vec::new();
    'titles: for title in titles {
        let title = title.as_ref();
        stats.total += 1;
        if !is_how_to_title(title) {
            stats.not_how_to += 1;
            continue;
        }
        let Some(mut query) = strip_question_form(title) else {
            stats.not_how_to += 1;
            continue;
        };
        loop {
            match ruleset.apply(&query) {
                Outcome::Rejected { rule_id, .. } => {
                    *stats.rejected.entry(rule_id).or_default() += 1;
                    continue 'titles;
                }
                Outcome::Kept { text } | Outcome::Transformed { text, .. } => {
                    let Some(stripped) = strip_question_form(&text) else {
                        stats.not_how_to += 1;
                        continue 'titles;
                    };
                    if stripped == query {
                        break;
                    }
                    query = stripped;
                }
            }
        }
        stats.retained += 1;
        out.push(query);
    }
    (out, stats)
}
