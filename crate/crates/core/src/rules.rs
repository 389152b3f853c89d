//! Rule-based syntactic filter over comment text.
//!
//! A [`Ruleset`] holds two kinds of rules. Transform rules cut detachable
//! noise out of a comment and keep the rest; reject rules discard the whole
//! comment. Transforms run first, in list order, until the text stops
//! changing; reject rules then see the transformed text and the first one
//! that matches decides the outcome.
//!
//! New rules can be registered through [`Ruleset::register`]. A useful rule
//! should target a feature that is common in comments, rare in real search
//! queries, and cheap to detect without false positives on ordinary prose.

use std::fmt;
use std::path::Path;
use std::sync::{Arc, LazyLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ids of the built-in rules, in default order.
pub mod ids {
    pub const HTML_TAGS: &str = "html_tags";
    pub const PARENTHESES: &str = "parentheses";
    pub const JAVADOC_TAGS: &str = "javadoc_tags";
    pub const URLS: &str = "urls";
    pub const NON_ENGLISH: &str = "non_english";
    pub const PUNCTUATION: &str = "punctuation";
    pub const INTERROGATION: &str = "interrogation";
    pub const SHORT_SENTENCE: &str = "short_sentence";

    pub const DEFAULT_ORDER: [&str; 8] = [
        HTML_TAGS,
        PARENTHESES,
        JAVADOC_TAGS,
        URLS,
        NON_ENGLISH,
        PUNCTUATION,
        INTERROGATION,
        SHORT_SENTENCE,
    ];
}

static HTML_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"</?[A-Za-z][A-Za-z0-9:-]*(?:\s[^<>]*)?/?>").unwrap());

fn collapse(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Deletes HTML tags and keeps the content they wrap.
pub fn strip_html_tags(text: &str) -> String {
    if !HTML_TAG.is_match(text) {
        return text.to_owned();
    }
    collapse(&HTML_TAG.replace_all(text, " "))
}

/// Deletes parenthesised spans, nesting included. An unclosed '(' swallows
/// the rest of the text; a stray ')' is left alone.
pub fn strip_parentheses(text: &str) -> String {
    if !text.contains('(') {
        return text.to_owned();
    }
    let mut out = String::with_capacity(text.len());
    let mut depth = 0usize;
    for c in text.chars() {
        match c {
            '(' => depth += 1,
            ')' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    out.push(' ');
                }
            }
            _ if depth == 0 => out.push(c),
            _ => {}
        }
    }
    collapse(&out)
}

/// '@' directly followed by an ASCII letter: `@param`, `{@link Foo}`, and
/// also e-mail addresses.
pub fn reject_javadoc(text: &str) -> bool {
    text.as_bytes()
        .windows(2)
        .any(|w| w[0] == b'@' && w[1].is_ascii_alphabetic())
}

pub fn reject_url(text: &str) -> bool {
    let lower = text.to_ascii_lowercase();
    if ["http://", "https://", "ftp://"].iter().any(|s| lower.contains(s)) {
        return true;
    }
    lower.split_whitespace().any(|token| {
        token
            .trim_start_matches(|c: char| !c.is_ascii_alphanumeric())
            .starts_with("www.")
    })
}

pub fn reject_non_english(text: &str) -> bool {
    !text.is_ascii()
}

pub fn reject_punctuation_only(text: &str) -> bool {
    !text.bytes().any(|b| b.is_ascii_alphabetic())
}

pub fn reject_interrogation(text: &str) -> bool {
    text.trim_end().ends_with('?')
}

pub fn reject_short(text: &str) -> bool {
    text.split_whitespace().count() <= 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Transform,
    Reject,
}

pub type TransformFn = Arc<dyn Fn(&str) -> String + Send + Sync>;
pub type PredicateFn = Arc<dyn Fn(&str) -> bool + Send + Sync>;

#[derive(Clone)]
enum RuleBody {
    Transform(TransformFn),
    Reject(PredicateFn),
}

/// A named rule. Transforms must never lengthen their input.
#[derive(Clone)]
pub struct Rule {
    id: String,
    enabled: bool,
    body: RuleBody,
}

impl Rule {
    pub fn transform(id: impl Into<String>, f: impl Fn(&str) -> String + Send + Sync + 'static) -> Self {
        Rule {
            id: id.into(),
            enabled: true,
            body: RuleBody::Transform(Arc::new(f)),
        }
    }

    pub fn reject(id: impl Into<String>, f: impl Fn(&str) -> bool + Send + Sync + 'static) -> Self {
        Rule {
            id: id.into(),
            enabled: true,
            body: RuleBody::Reject(Arc::new(f)),
        }
    }

    /// Looks up a built-in rule by id.
    pub fn builtin(id: &str) -> Option<Self> {
        let rule = match id {
            ids::HTML_TAGS => Rule::transform(id, strip_html_tags),
            ids::PARENTHESES => Rule::transform(id, strip_parentheses),
            ids::JAVADOC_TAGS => Rule::reject(id, reject_javadoc),
            ids::URLS => Rule::reject(id, reject_url),
            ids::NON_ENGLISH => Rule::reject(id, reject_non_english),
            ids::PUNCTUATION => Rule::reject(id, reject_punctuation_only),
            ids::INTERROGATION => Rule::reject(id, reject_interrogation),
            ids::SHORT_SENTENCE => Rule::reject(id, reject_short),
            _ => return None,
        };
        Some(rule)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn kind(&self) -> RuleKind {
        match self.body {
            RuleBody::Transform(_) => RuleKind::Transform,
            RuleBody::Reject(_) => RuleKind::Reject,
        }
    }

    pub fn descriptor(&self) -> RuleDescriptor {
        RuleDescriptor {
            id: self.id.clone(),
            kind: self.kind(),
            enabled: self.enabled,
        }
    }
}

impl fmt::Debug for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Rule")
            .field("id", &self.id)
            .field("kind", &self.kind())
            .field("enabled", &self.enabled)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleDescriptor {
    pub id: String,
    pub kind: RuleKind,
    pub enabled: bool,
}

/// One change made by a transform rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformStep {
    pub rule_id: String,
    pub before: String,
    pub after: String,
}

/// Result of running a ruleset over one comment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Kept {
        text: String,
    },
    Transformed {
        text: String,
        steps: Vec<TransformStep>,
    },
    /// `steps` lists transforms applied before the rejecting rule fired.
    Rejected {
        rule_id: String,
        steps: Vec<TransformStep>,
    },
}

impl Outcome {
    /// Cleaned text for retained outcomes.
    pub fn text(&self) -> Option<&str> {
        match self {
            Outcome::Kept { text } | Outcome::Transformed { text, .. } => Some(text),
            Outcome::Rejected { .. } => None,
        }
    }

    pub fn rule_id(&self) -> Option<&str> {
        match self {
            Outcome::Rejected { rule_id, .. } => Some(rule_id),
            _ => None,
        }
    }

    pub fn steps(&self) -> &[TransformStep] {
        match self {
            Outcome::Kept { .. } => &[],
            Outcome::Transformed { steps, .. } | Outcome::Rejected { steps, .. } => steps,
        }
    }

    pub fn is_rejected(&self) -> bool {
        matches!(self, Outcome::Rejected { .. })
    }
}

/// Ruleset configuration entry: `[[rule]]` tables in TOML.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleEntry {
    pub id: String,
    #[serde(default = "default_true")]
    pub enabled: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulesetConfig {
    #[serde(rename = "rule")]
    pub rules: Vec<RuleEntry>,
}

impl Default for RulesetConfig {
    fn default() -> Self {
        RulesetConfig {
            rules: ids::DEFAULT_ORDER
                .iter()
                .map(|id| RuleEntry {
                    id: (*id).to_owned(),
                    enabled: true,
                })
                .collect(),
        }
    }
}

impl RulesetConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// An ordered, immutable set of rules.
#[derive(Debug, Clone)]
pub struct Ruleset {
    rules: Vec<Rule>,
}

impl Default for Ruleset {
    fn default() -> Self {
        Ruleset {
            rules: ids::DEFAULT_ORDER.iter().map(|id| Rule::builtin(id).unwrap()).collect(),
        }
    }
}

impl Ruleset {
    pub fn empty() -> Self {
        Ruleset { rules: Vec::new() }
    }

    /// Default rules minus the interrogation rule, for question titles.
    pub fn bootstrap_default() -> Self {
        Ruleset::default()
            .with_enabled(ids::INTERROGATION, false)
            .expect("built-in rule")
    }

    /// Builds a ruleset from built-in rules in the configured order.
    pub fn from_config(config: &RulesetConfig) -> Result<Self> {
        let mut rules: Vec<Rule> = Vec::with_capacity(config.rules.len());
        for entry in &config.rules {
            if rules.iter().any(|r| r.id == entry.id) {
                return Err(Error::DuplicateRule(entry.id.clone()));
            }
            let mut rule = Rule::builtin(&entry.id).ok_or_else(|| Error::UnknownRule(entry.id.clone()))?;
            rule.enabled = entry.enabled;
            rules.push(rule);
        }
        Ok(Ruleset { rules })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn descriptors(&self) -> Vec<RuleDescriptor> {
        self.rules.iter().map(Rule::descriptor).collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.rules.iter().any(|r| r.id == id)
    }

    /// Adds a rule after the last existing rule of the same kind.
    pub fn register(mut self, rule: Rule) -> Result<Self> {
        if self.contains(&rule.id) {
            return Err(Error::DuplicateRule(rule.id));
        }
        let kind = rule.kind();
        let pos = self
            .rules
            .iter()
            .rposition(|r| r.kind() == kind)
            .map(|i| i + 1)
            .unwrap_or(match kind {
                RuleKind::Transform => 0,
                RuleKind::Reject => self.rules.len(),
            });
        self.rules.insert(pos, rule);
        Ok(self)
    }

    pub fn with_enabled(mut self, id: &str, enabled: bool) -> Result<Self> {
        let rule = self
            .rules
            .iter_mut()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::UnknownRule(id.to_owned()))?;
        rule.enabled = enabled;
        Ok(self)
    }

    fn transforms(&self) -> impl Iterator<Item = (&str, &TransformFn)> {
        self.rules.iter().filter(|r| r.enabled).filter_map(|r| match &r.body {
            RuleBody::Transform(f) => Some((r.id.as_str(), f)),
            RuleBody::Reject(_) => None,
        })
    }

    fn rejects(&self) -> impl Iterator<Item = (&str, &PredicateFn)> {
        self.rules.iter().filter(|r| r.enabled).filter_map(|r| match &r.body {
            RuleBody::Reject(f) => Some((r.id.as_str(), f)),
            RuleBody::Transform(_) => None,
        })
    }

    /// Runs the transform rules to a fixpoint, then the reject rules.
    ///
    /// Repeating the transform pass matters when one removal exposes
    /// another, e.g. `<p<p>>` leaves a new `<p >` tag behind.
    pub fn apply(&self, text: &str) -> Outcome {
        let mut current = text.to_owned();
        let mut steps = Vec::new();
        let max_passes = current.chars().count() + 2;
        for _ in 0..max_passes {
            let mut changed = false;
            for (id, f) in self.transforms() {
                let next = f(&current);
                if next != current {
                    steps.push(TransformStep {
                        rule_id: id.to_owned(),
                        before: std::mem::replace(&mut current, next.clone()),
                        after: next,
                    });
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if let Some((id, _)) = self.rejects().find(|(_, f)| f(&current)) {
            return Outcome::Rejected {
                rule_id: id.to_owned(),
                steps,
            };
        }
        if current == text {
            Outcome::Kept { text: current }
        } else {
            Outcome::Transformed { text: current, steps }
        }
    }
}
