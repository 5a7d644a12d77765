//! Line-delimited unified dataset files.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_entry, KnowledgeFact, QueryKind, TaskId, TestQuery, UnifiedEntry, Violation};
use crate::lang::LanguageCode;
use crate::text::nfc;

// Field order here is the canonical on-disk order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEntry {
    id: String,
    task: TaskId,
    lang: LanguageCode,
    edit: WireEdit,
    tests: WireTests,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEdit {
    query: String,
    new_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    old_answer: Option<String>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct WireTests {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reliability: Option<WireTest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generality: Option<WireTest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    locality: Option<WireTest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    portability: Option<WireTest>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireTest {
    query: String,
    answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    original_answer: Option<String>,
}

impl WireTests {
    fn slot(&mut self, kind: QueryKind) -> &mut Option<WireTest> {
        match kind {
            QueryKind::Reliability => &mut self.reliability,
            QueryKind::Generality => &mut self.generality,
            QueryKind::Locality => &mut self.locality,
            QueryKind::Portability => &mut self.portability,
        }
    }
}

impl From<&UnifiedEntry> for WireEntry {
    fn from(e: &UnifiedEntry) -> Self {
        let mut tests = WireTests::default();
        for (kind, t) in &e.tests {
            *tests.slot(*kind) = Some(WireTest {
                query: t.query.clone(),
                answer: t.expected_answer.clone(),
                original_answer: t.original_answer.clone(),
            });
        }
        WireEntry {
            id: e.id.clone(),
            task: e.task,
            lang: e.language.clone(),
            edit: WireEdit {
                query: e.edit.query.clone(),
                new_answer: e.edit.new_answer.clone(),
                old_answer: e.edit.old_answer.clone(),
            },
            tests,
        }
    }
}

impl WireEntry {
    fn into_entry(mut self) -> UnifiedEntry {
        let mut tests = BTreeMap::new();
        for kind in QueryKind::ALL {
            if let Some(t) = self.tests.slot(kind).take() {
                tests.insert(
                    kind,
                    TestQuery {
                        kind,
                        query: nfc(&t.query),
                        expected_answer: nfc(&t.answer),
                        original_answer: t.original_answer.as_deref().map(nfc),
                    },
                );
            }
        }
        UnifiedEntry {
            id: self.id,
            task: self.task,
            edit: KnowledgeFact {
                query: nfc(&self.edit.query),
                new_answer: nfc(&self.edit.new_answer),
                old_answer: self.edit.old_answer.as_deref().map(nfc),
                language: self.lang.clone(),
            },
            language: self.lang,
            tests,
        }
    }
}

/// Serializes one entry as a single JSON line (no trailing newline).
pub fn to_jsonl_line(entry: &UnifiedEntry) -> String {
    serde_json::to_string(&WireEntry::from(entry)).expect("entry serialization is infallible")
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemKind {
    Parse(String),
    Invalid(Vec<Violation>),
    DuplicateId { id: String, first_line: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineProblem {
    pub line: usize,
    pub kind: ProblemKind,
}

impl fmt::Display for LineProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: ", self.line)?;
        match &self.kind {
            ProblemKind::Parse(msg) => write!(f, "parse error: {msg}"),
            ProblemKind::Invalid(v) => {
                let joined: Vec<_> = v.iter().map(ToString::to_string).collect();
                write!(f, "invalid entry: {}", joined.join("; "))
            }
            ProblemKind::DuplicateId { id, first_line } => {
                write!(f, "duplicate id {id:?} (first seen on line {first_line})")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EntryFileError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{} bad line(s); first: {}", .0.len(), .0[0])]
    Lines(Vec<LineProblem>),
}

impl EntryFileError {
    pub fn problems(&self) -> &[LineProblem] {
        match self {
            EntryFileError::Lines(p) => p,
            EntryFileError::Io(_) => &[],
        }
    }
}

/// Parses line-delimited entries; every accepted entry passes validation.
pub fn parse_entries(reader: impl Read) -> Result<Vec<UnifiedEntry>, EntryFileError> {
    let mut entries = Vec::new();
    let mut problems = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();

    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = match serde_json::from_str::<WireEntry>(&line) {
            Ok(w) => w.into_entry(),
            Err(e) => {
                problems.push(LineProblem {
                    line: line_no,
                    kind: ProblemKind::Parse(e.to_string()),
                });
                continue;
            }
        };
        let violations = validate_entry(&entry);
        if !violations.is_empty() {
            problems.push(LineProblem {
                line: line_no,
                kind: ProblemKind::Invalid(violations),
            });
            continue;
        }
        if let Some(&first_line) = seen.get(&entry.id) {
            problems.push(LineProblem {
                line: line_no,
                kind: ProblemKind::DuplicateId {
                    id: entry.id.clone(),
                    first_line,
                },
            });
            continue;
        }
        seen.insert(entry.id.clone(), line_no);
        entries.push(entry);
    }

    if problems.is_empty() {
        Ok(entries)
    } else {
        Err(EntryFileError::Lines(problems))
    }
}

pub fn read_entries(path: impl AsRef<Path>) -> Result<Vec<UnifiedEntry>, EntryFileError> {
    parse_entries(fs::File::open(path)?)
}

pub fn write_entries<'a>(
    entries: impl IntoIterator<Item = &'a UnifiedEntry>,
    path: impl AsRef<Path>,
) -> io::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    for entry in entries {
        out.write_all(to_jsonl_line(entry).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    fn file_of(entries: &[UnifiedEntry]) -> String {
        entries.iter().map(|e| to_jsonl_line(e) + "\n").collect()
    }

    #[test]
    fn canonical_field_order() {
        let mut e = zsre_entry(7, "de");
        e.tests.get_mut(&QueryKind::Locality).unwrap().original_answer = Some("x".into());
        let line = to_jsonl_line(&e);
        assert!(line.starts_with(r#"{"id":"zsre-000007-de","task":"zsre","lang":"de","edit":{"query":"#));
        let r = line.find("\"reliability\"").unwrap();
        let g = line.find("\"generality\"").unwrap();
        let l = line.find("\"locality\"").unwrap();
        let p = line.find("\"portability\"").unwrap();
        assert!(r < g && g < l && l < p);
        assert!(line.contains(r#""answer":"answer 7","original_answer":"x""#));
        assert!(!line.contains("old_answer"));
    }

    #[test]
    fn three_entry_roundtrip_is_byte_identical() {
        let entries: Vec<_> = (0..3).map(|i| zsre_entry(i, "en")).collect();
        let text = file_of(&entries);
        let back = parse_entries(text.as_bytes()).unwrap();
        assert_eq!(back, entries);
        assert_eq!(file_of(&back), text);
    }

    #[test]
    fn truncated_line_reports_line_number() {
        let entries: Vec<_> = (0..3).map(|i| zsre_entry(i, "en")).collect();
        let mut lines: Vec<String> = entries.iter().map(to_jsonl_line).collect();
        let cut = lines[1].len() / 2;
        lines[1].truncate(cut);
        let err = parse_entries(lines.join("\n").as_bytes()).unwrap_err();
        let problems = err.problems();
        assert_eq!(problems.len(), 1);
        assert_eq!(problems[0].line, 2);
        assert!(matches!(problems[0].kind, ProblemKind::Parse(_)));
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let e = zsre_entry(7, "en");
        let text = file_of(&[e.clone(), zsre_entry(8, "en"), e]);
        let err = parse_entries(text.as_bytes()).unwrap_err();
        match &err.problems()[0].kind {
            ProblemKind::DuplicateId { id, first_line } => {
                assert_eq!(id, "zsre-000007");
                assert_eq!(*first_line, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(err.problems()[0].line, 3);
    }

    #[test]
    fn unknown_tags_are_rejected() {
        let line = to_jsonl_line(&zsre_entry(1, "en")).replace("\"zsre\"", "\"squad\"");
        assert!(parse_entries(line.as_bytes()).is_err());
        let line = to_jsonl_line(&zsre_entry(1, "en")).replace("\"portability\"", "\"fluency\"");
        assert!(parse_entries(line.as_bytes()).is_err());
    }

    #[test]
    fn missing_kind_on_disk_is_a_validation_problem() {
        let mut e = zsre_entry(1, "en");
        e.tests.remove(&QueryKind::Generality);
        let err = parse_entries(to_jsonl_line(&e).as_bytes()).unwrap_err();
        match &err.problems()[0].kind {
            ProblemKind::Invalid(v) => assert_eq!(v[0].to_string(), "tests: missing kind generality"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingestion_applies_nfc() {
        let mut e = zsre_entry(1, "fr");
        e.edit.new_answer = "Cafe\u{301}".into();
        let back = parse_entries(to_jsonl_line(&e).as_bytes()).unwrap();
        assert_eq!(back[0].edit.new_answer, "Caf\u{e9}");
    }
}
