//! Knowledge graph over (subject, relation, object) triples and one-hop
//! portability question synthesis.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::model::{KnowledgeFact, QueryKind, TestQuery};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KnowledgeTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl KnowledgeTriple {
    pub fn new(subject: impl Into<String>, relation: impl Into<String>, object: impl Into<String>) -> Self {
        KnowledgeTriple {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        }
    }

    fn is_complete(&self) -> bool {
        ![&self.subject, &self.relation, &self.object]
            .iter()
            .any(|f| f.trim().is_empty())
    }
}

/// Immutable once built; `index` is exactly the projection of `triples`.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    triples: Vec<KnowledgeTriple>,
    index: BTreeMap<String, Vec<(String, String)>>,
}

impl KnowledgeGraph {
    /// Builds the graph, skipping triples with an empty field. Returns the
    /// number skipped alongside the graph.
    pub fn build(triples: impl IntoIterator<Item = KnowledgeTriple>) -> (Self, usize) {
        let mut graph = KnowledgeGraph::default();
        let mut skipped = 0;
        for t in triples {
            if !t.is_complete() {
                skipped += 1;
                continue;
            }
            graph
                .index
                .entry(t.subject.clone())
                .or_default()
                .push((t.relation.clone(), t.object.clone()));
            graph.triples.push(t);
        }
        (graph, skipped)
    }

    pub fn triples(&self) -> &[KnowledgeTriple] {
        &self.triples
    }

    pub fn outgoing(&self, subject: &str) -> &[(String, String)] {
        self.index.get(subject).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Phrasing for one relation, e.g. `Who is the spouse of {subject}?`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryTemplate {
    pub relation: String,
    pub pattern: String,
}

pub const SUBJECT_PLACEHOLDER: &str = "{subject}";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("line {line}: expected relation<TAB>pattern")]
    Malformed { line: usize },
    #[error("line {line}: pattern must contain {{subject}} exactly once")]
    Placeholder { line: usize },
    #[error("duplicate template for relation {0:?}")]
    Duplicate(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl QueryTemplate {
    pub fn new(relation: impl Into<String>, pattern: impl Into<String>) -> Option<Self> {
        let pattern = pattern.into();
        (pattern.matches(SUBJECT_PLACEHOLDER).count() == 1).then(|| QueryTemplate {
            relation: relation.into(),
            pattern,
        })
    }

    pub fn apply(&self, subject: &str) -> String {
        self.pattern.replace(SUBJECT_PLACEHOLDER, subject)
    }
}

/// Parses a `relation<TAB>pattern` file; `#` lines and blanks are ignored.
pub fn parse_templates(text: &str) -> Result<Vec<QueryTemplate>, TemplateError> {
    let mut out: Vec<QueryTemplate> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (relation, pattern) = line
            .split_once('\t')
            .filter(|(r, p)| !r.trim().is_empty() && !p.trim().is_empty())
            .ok_or(TemplateError::Malformed { line: line_no })?;
        let t =
            QueryTemplate::new(relation.trim(), pattern.trim()).ok_or(TemplateError::Placeholder { line: line_no })?;
        if out.iter().any(|o| o.relation == t.relation) {
            return Err(TemplateError::Duplicate(t.relation));
        }
        out.push(t);
    }
    Ok(out)
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<QueryTemplate>, TemplateError> {
    let text = fs::read_to_string(path).map_err(|e| TemplateError::Io(e.to_string()))?;
    parse_templates(&text)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HopError {
    #[error("new object {0:?} has no outgoing edge")]
    NoHopAvailable(String),
    #[error("no template for relation {0:?}")]
    MissingTemplate(String),
    #[error("edit answer {answer:?} is not the edited triple's object {object:?}")]
    EditMismatch { answer: String, object: String },
}

/// Composes the edited triple (s, r1, o_new) with the smallest outgoing
/// (r2, c) of o_new and phrases "r2 of (the r1 of s)" with the r2 template.
pub fn one_hop_portability(
    graph: &KnowledgeGraph,
    edit: &KnowledgeFact,
    edited_triple: &KnowledgeTriple,
    templates: &[QueryTemplate],
) -> Result<TestQuery, HopError> {
    if edit.new_answer.trim() != edited_triple.object.trim() {
        return Err(HopError::EditMismatch {
            answer: edit.new_answer.clone(),
            object: edited_triple.object.clone(),
        });
    }
    let (relation, object) = graph
        .outgoing(&edited_triple.object)
        .iter()
        .min()
        .ok_or_else(|| HopError::NoHopAvailable(edited_triple.object.clone()))?;
    let template = templates
        .iter()
        .find(|t| &t.relation == relation)
        .ok_or_else(|| HopError::MissingTemplate(relation.clone()))?;
    let descriptor = format!("the {} of {}", edited_triple.relation, edited_triple.subject);
    Ok(TestQuery {
        kind: QueryKind::Portability,
        query: template.apply(&descriptor),
        expected_answer: object.clone(),
        original_answer: None,
    })
}
