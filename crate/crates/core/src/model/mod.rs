//! Shared domain types: the unified four-query entry and the values that
//! flow between the builder, prompt assembly, the model client and metrics.

mod codec;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lang::LanguageCode;
use crate::metrics::{self, MetricSelection};

pub use codec::{parse_entries, read_entries, to_jsonl_line, write_entries, EntryFileError, LineProblem, ProblemKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskId {
    Zsre,
    Counterfact,
    Wfd,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [TaskId::Zsre, TaskId::Counterfact, TaskId::Wfd];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::Zsre => "zsre",
            TaskId::Counterfact => "counterfact",
            TaskId::Wfd => "wfd",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {what} tag {tag:?}")]
pub struct UnknownTag {
    pub what: &'static str,
    pub tag: String,
}

impl FromStr for TaskId {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownTag {
                what: "task",
                tag: s.to_string(),
            })
    }
}

/// The four behaviours every edit is tested on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Reliability,
    Generality,
    Locality,
    Portability,
}

impl QueryKind {
    pub const ALL: [QueryKind; 4] = [
        QueryKind::Reliability,
        QueryKind::Generality,
        QueryKind::Locality,
        QueryKind::Portability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryKind::Reliability => "reliability",
            QueryKind::Generality => "generality",
            QueryKind::Locality => "locality",
            QueryKind::Portability => "portability",
        }
    }

    pub fn letter(self) -> char {
        match self {
            QueryKind::Reliability => 'R',
            QueryKind::Generality => 'G',
            QueryKind::Locality => 'L',
            QueryKind::Portability => 'P',
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryKind {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        QueryKind::ALL
            .into_iter()
            .find(|k| k.as_str() == lower || (lower.len() == 1 && k.letter().to_ascii_lowercase().to_string() == lower))
            .ok_or_else(|| UnknownTag {
                what: "query kind",
                tag: s.to_string(),
            })
    }
}

/// A new fact: the edit query, the answer it should now have, and (when the
/// source dataset knows it) the answer it used to have.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeFact {
    pub query: String,
    pub new_answer: String,
    pub old_answer: Option<String>,
    pub language: LanguageCode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestQuery {
    pub kind: QueryKind,
    pub query: String,
    /// Post-edit gold answer; for locality this is the unchanged answer.
    pub expected_answer: String,
    pub original_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnifiedEntry {
    pub id: String,
    pub task: TaskId,
    pub language: LanguageCode,
    pub edit: KnowledgeFact,
    pub tests: BTreeMap<QueryKind, TestQuery>,
}

/// Builds `<task>-<6-digit index>[-<lang>]`; English ids carry no suffix.
pub fn entry_id(task: TaskId, source_index: usize, language: &LanguageCode) -> String {
    if language.is_english() {
        format!("{}-{:06}", task, source_index)
    } else {
        format!("{}-{:06}-{}", task, source_index, language)
    }
}

/// Parsed form of an entry id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryIdParts {
    pub task: TaskId,
    pub index: usize,
    pub language: Option<String>,
}

pub fn parse_entry_id(id: &str) -> Option<EntryIdParts> {
    let (task, rest) = id.split_once('-')?;
    let task = task.parse().ok()?;
    if rest.len() < 6 || !rest.is_char_boundary(6) {
        return None;
    }
    let (digits, suffix) = rest.split_at(6);
    if !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let language = match suffix {
        "" => None,
        s => Some(s.strip_prefix('-')?.to_string()),
    };
    Some(EntryIdParts {
        task,
        index: digits.parse().ok()?,
        language,
    })
}

impl UnifiedEntry {
    pub fn test(&self, kind: QueryKind) -> Option<&TestQuery> {
        self.tests.get(&kind)
    }

    /// Id without the language suffix; joins translated counterparts.
    pub fn base_id(&self) -> &str {
        base_id(&self.id)
    }
}

pub fn base_id(id: &str) -> &str {
    match parse_entry_id(id) {
        Some(EntryIdParts {
            language: Some(lang), ..
        }) => &id[..id.len() - lang.len() - 1],
        _ => id,
    }
}

/// One in-context example: a source-language fact and a target-language
/// question/answer pair showing how the fact should (or should not) be used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demonstration {
    pub kind: QueryKind,
    pub fact: KnowledgeFact,
    pub query: String,
    pub answer: String,
    /// Corpus record the fact came from (source language).
    pub fact_id: String,
    /// Corpus record the question and answer came from (target language).
    pub query_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

/// Model output with per-token natural-log probabilities.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoredCompletion {
    pub text: String,
    pub tokens: Vec<TokenLogprob>,
}

impl ScoredCompletion {
    pub fn text_only(text: impl Into<String>) -> Self {
        ScoredCompletion {
            text: text.into(),
            tokens: Vec::new(),
        }
    }

    pub fn logprobs_valid(&self) -> bool {
        self.tokens.iter().all(|t| t.logprob <= 0.0)
    }
}

/// One failed rule on one field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

fn blank(text: &str) -> bool {
    text.trim().is_empty()
}

/// Checks every entry invariant and returns what failed; empty means valid.
pub fn validate_entry(entry: &UnifiedEntry) -> Vec<Violation> {
    let mut out = Vec::new();

    match parse_entry_id(&entry.id) {
        None => out.push(Violation::new("id", "malformed (want <task>-<6 digits>[-<lang>])")),
        Some(parts) => {
            if parts.task != entry.task {
                out.push(Violation::new(
                    "id",
                    format!("task prefix {} != {}", parts.task, entry.task),
                ));
            }
            let expected = (!entry.language.is_english()).then(|| entry.language.to_string());
            if parts.language != expected {
                out.push(Violation::new("id", "language suffix does not match entry language"));
            }
        }
    }

    let edit = &entry.edit;
    if blank(&edit.query) {
        out.push(Violation::new("edit.query", "empty"));
    }
    if blank(&edit.new_answer) {
        out.push(Violation::new("edit.new_answer", "empty"));
    }
    if let Some(old) = &edit.old_answer {
        if metrics::normalize_answer(old, &edit.language) == metrics::normalize_answer(&edit.new_answer, &edit.language)
        {
            out.push(Violation::new(
                "edit.old_answer",
                "equals new_answer after normalization",
            ));
        }
    }
    if edit.language != entry.language {
        out.push(Violation::new(
            "edit.language",
            format!("mismatch (edit {}, entry {})", edit.language, entry.language),
        ));
    }

    for kind in QueryKind::ALL {
        let Some(test) = entry.tests.get(&kind) else {
            out.push(Violation::new("tests", format!("missing kind {kind}")));
            continue;
        };
        let field = format!("tests.{kind}");
        if test.kind != kind {
            out.push(Violation::new(
                &field,
                format!("kind tag {} under key {kind}", test.kind),
            ));
        }
        if blank(&test.query) {
            out.push(Violation::new(format!("{field}.query"), "empty"));
        }
        if blank(&test.expected_answer) {
            out.push(Violation::new(format!("{field}.answer"), "empty"));
        }
        if MetricSelection::uses_probability(entry.task, kind) {
            match &test.original_answer {
                None => out.push(Violation::new(
                    format!("{field}.original_answer"),
                    "required for S/M scoring",
                )),
                Some(o) if blank(o) => out.push(Violation::new(format!("{field}.original_answer"), "empty")),
                _ => {}
            }
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn lang(code: &str) -> LanguageCode {
        LanguageCode::new(code).unwrap()
    }

    pub fn test_query(kind: QueryKind, q: &str, a: &str, o: Option<&str>) -> TestQuery {
        TestQuery {
            kind,
            query: q.into(),
            expected_answer: a.into(),
            original_answer: o.map(Into::into),
        }
    }

    /// A fully valid zsRE entry.
    pub fn zsre_entry(index: usize, code: &str) -> UnifiedEntry {
        let language = lang(code);
        let tests = QueryKind::ALL
            .into_iter()
            .map(|k| {
                (
                    k,
                    test_query(k, &format!("{k} question {index}?"), &format!("answer {index}"), None),
                )
            })
            .collect();
        UnifiedEntry {
            id: entry_id(TaskId::Zsre, index, &language),
            task: TaskId::Zsre,
            edit: KnowledgeFact {
                query: format!("Who founded company {index}?"),
                new_answer: format!("Founder {index}"),
                old_answer: None,
                language: language.clone(),
            },
            language,
            tests,
        }
    }
}
