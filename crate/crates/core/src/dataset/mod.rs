//! Benchmark construction: unify the three source datasets into four-query
//! entries, synthesize WFD portability questions from the knowledge graph,
//! translate entries into target languages, and summarize corpora.

mod graph;
mod raw;
mod stats;
mod translate;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::lang::LanguageCode;
use crate::model::{
    entry_id, parse_entry_id, validate_entry, KnowledgeFact, QueryKind, TaskId, TestQuery, UnifiedEntry,
};
use crate::text::nfc;

pub use graph::{
    load_templates, one_hop_portability, parse_templates, HopError, KnowledgeGraph, KnowledgeTriple, QueryTemplate,
    TemplateError,
};
pub use raw::{read_records, CounterfactRecord, PortabilityQa, WfdRecord, ZsreRecord};
pub use stats::{corpus_stats, CorpusStats, StatsError};
pub use translate::{
    expand_language, ExpansionError, HttpTranslator, IdentityTranslator, ReverseTranslator, TranslateError,
    TranslationFailure, Translator,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    RawParse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("no raw {task} file in {dir}")]
    MissingSource { task: TaskId, dir: PathBuf },
    #[error("{task} records lack inline portability and {dir} has no {task}_portability file")]
    MissingPortabilityExtension { task: TaskId, dir: PathBuf },
    #[error("WFD ingestion needs {0}")]
    MissingTemplates(PathBuf),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedRecord {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub task: TaskId,
    pub entries: Vec<UnifiedEntry>,
    pub dropped: Vec<DroppedRecord>,
}

impl IngestReport {
    /// Shifts every entry index by `offset`, keeping a training split's ids
    /// apart from a test split built from another file.
    pub fn offset_ids(&mut self, offset: usize) {
        for e in &mut self.entries {
            let index = parse_entry_id(&e.id).expect("ingested ids are well formed").index;
            e.id = entry_id(e.task, index + offset, &e.language);
        }
    }
}

pub const TEMPLATE_FILE: &str = "wfd_templates.tsv";

fn source_dir(source: &Path) -> (PathBuf, Option<PathBuf>) {
    if source.is_file() {
        let dir = source.parent().map(Path::to_path_buf).unwrap_or_default();
        (dir, Some(source.to_path_buf()))
    } else {
        (source.to_path_buf(), None)
    }
}

/// Parses a task tag and ingests.
pub fn ingest_tag(task: &str, source: &Path) -> Result<IngestReport, DatasetError> {
    let task = task.parse().map_err(|_| DatasetError::UnknownTask(task.to_string()))?;
    ingest(task, source)
}

/// Reads one task's raw data (a directory, or the main raw file inside it)
/// and returns English unified entries plus the records that were dropped.
pub fn ingest(task: TaskId, source: &Path) -> Result<IngestReport, DatasetError> {
    let (dir, main) = source_dir(source);
    let main = main
        .or_else(|| raw::locate(&dir, task.as_str()))
        .ok_or_else(|| DatasetError::MissingSource { task, dir: dir.clone() })?;
    let candidates = match task {
        TaskId::Zsre => ingest_zsre(&dir, &main)?,
        TaskId::Counterfact => ingest_counterfact(&dir, &main)?,
        TaskId::Wfd => ingest_wfd(&dir, &main)?,
    };

    let mut report = IngestReport {
        task,
        entries: Vec::new(),
        dropped: Vec::new(),
    };
    for (index, candidate) in candidates.into_iter().enumerate() {
        match candidate.and_then(|e| {
            let violations = validate_entry(&e);
            if violations.is_empty() {
                Ok(e)
            } else {
                let v: Vec<_> = violations.iter().map(ToString::to_string).collect();
                Err(v.join("; "))
            }
        }) {
            Ok(e) => report.entries.push(e),
            Err(reason) => report.dropped.push(DroppedRecord { index, reason }),
        }
    }
    Ok(report)
}

type Candidate = Result<UnifiedEntry, String>;

fn text(field: &str, value: Option<&str>) -> Result<String, String> {
    match value.map(str::trim) {
        Some(v) if !v.is_empty() => Ok(nfc(v)),
        _ => Err(format!("missing {field}")),
    }
}

fn test(kind: QueryKind, query: String, answer: String, original: Option<String>) -> (QueryKind, TestQuery) {
    (
        kind,
        TestQuery {
            kind,
            query,
            expected_answer: answer,
            original_answer: original,
        },
    )
}

fn english_entry(
    task: TaskId,
    index: usize,
    edit_query: String,
    new_answer: String,
    old_answer: Option<String>,
    tests: Vec<(QueryKind, TestQuery)>,
) -> UnifiedEntry {
    let language = LanguageCode::english();
    UnifiedEntry {
        id: entry_id(task, index, &language),
        task,
        edit: KnowledgeFact {
            query: edit_query,
            new_answer,
            old_answer,
            language: language.clone(),
        },
        language,
        tests: tests.into_iter().collect::<BTreeMap<_, _>>(),
    }
}

fn ingest_zsre(dir: &Path, main: &Path) -> Result<Vec<Candidate>, DatasetError> {
    let records: Vec<ZsreRecord> = read_records(main)?;
    let extension = if records.iter().all(|r| r.portability.is_some()) {
        Default::default()
    } else {
        let path = raw::locate(dir, "zsre_portability").ok_or_else(|| DatasetError::MissingPortabilityExtension {
            task: TaskId::Zsre,
            dir: dir.to_path_buf(),
        })?;
        raw::zsre_portability_index(read_records(&path)?)
    };

    Ok(records
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            let query = text("src", Some(&r.src))?;
            let answer = text("alt", Some(&r.alt))?;
            let rephrase = text("rephrase", r.rephrase.as_deref())?;
            let loc = r
                .loc
                .as_deref()
                .map(|l| l.trim().trim_start_matches("nq question:").trim());
            let loc = text("loc", loc)?;
            let loc_ans = text("loc_ans", r.loc_ans.as_deref())?;
            let port = r
                .portability
                .as_ref()
                .or_else(|| extension.get(r.src.trim()))
                .ok_or("missing portability")?;
            let tests = vec![
                test(QueryKind::Reliability, query.clone(), answer.clone(), None),
                test(QueryKind::Generality, rephrase, answer.clone(), None),
                test(QueryKind::Locality, loc, loc_ans, None),
                test(
                    QueryKind::Portability,
                    text("portability question", Some(&port.question))?,
                    text("portability answer", Some(&port.answer))?,
                    None,
                ),
            ];
            Ok(english_entry(TaskId::Zsre, index, query, answer, None, tests))
        })
        .collect())
}

fn ingest_counterfact(dir: &Path, main: &Path) -> Result<Vec<Candidate>, DatasetError> {
    let records: Vec<CounterfactRecord> = read_records(main)?;
    let extension = if records.iter().all(|r| r.portability.is_some()) {
        Default::default()
    } else {
        let path =
            raw::locate(dir, "counterfact_portability").ok_or_else(|| DatasetError::MissingPortabilityExtension {
                task: TaskId::Counterfact,
                dir: dir.to_path_buf(),
            })?;
        raw::counterfact_portability_index(read_records(&path)?)
    };

    Ok(records
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            let rw = &r.requested_rewrite;
            let subject = text("subject", Some(&rw.subject))?;
            let prompt = text("prompt", Some(&rw.prompt))?;
            let query = prompt.replace("{}", &subject);
            let new = text("target_new", Some(&rw.target_new.str))?;
            let old = text("target_true", Some(&rw.target_true.str))?;
            let paraphrase = text("paraphrase_prompts", r.paraphrase_prompts.first().map(String::as_str))?;
            let neighbor = text(
                "neighborhood_prompts",
                r.neighborhood_prompts.first().map(String::as_str),
            )?;
            let port = r
                .portability
                .as_ref()
                .or_else(|| extension.get(&r.case_id))
                .ok_or("missing portability")?;
            let tests = vec![
                test(QueryKind::Reliability, query.clone(), new.clone(), Some(old.clone())),
                test(QueryKind::Generality, paraphrase, new.clone(), Some(old.clone())),
                // Neighbours keep the true object; the edit target is the competitor.
                test(QueryKind::Locality, neighbor, old.clone(), Some(new.clone())),
                test(
                    QueryKind::Portability,
                    text("portability question", Some(&port.question))?,
                    text("portability answer", Some(&port.answer))?,
                    None,
                ),
            ];
            Ok(english_entry(TaskId::Counterfact, index, query, new, Some(old), tests))
        })
        .collect())
}

/// Graph over every triple the WFD records mention: pre- and post-edit
/// states plus their context.
pub fn wfd_graph(records: &[WfdRecord]) -> KnowledgeGraph {
    let triples = records.iter().flat_map(|r| {
        let s = nfc(r.subject.trim());
        let rel = r.relation.trim().to_string();
        [
            KnowledgeTriple::new(s.clone(), rel.clone(), nfc(r.new_object.trim())),
            KnowledgeTriple::new(s, rel, nfc(r.old_object.trim())),
        ]
        .into_iter()
        .chain(
            r.context
                .iter()
                .map(|[s, p, o]| KnowledgeTriple::new(nfc(s.trim()), p.trim(), nfc(o.trim()))),
        )
    });
    KnowledgeGraph::build(triples).0
}

fn ingest_wfd(dir: &Path, main: &Path) -> Result<Vec<Candidate>, DatasetError> {
    let records: Vec<WfdRecord> = read_records(main)?;
    let template_path = dir.join(TEMPLATE_FILE);
    if !template_path.is_file() {
        return Err(DatasetError::MissingTemplates(template_path));
    }
    let templates = load_templates(&template_path)?;
    let graph = wfd_graph(&records);

    Ok(records
        .iter()
        .enumerate()
        .map(|(index, r)| {
            let query = text("prompt", Some(&r.prompt))?;
            let new = text("new_object", Some(&r.new_object))?;
            let old = text("old_object", Some(&r.old_object))?;
            let paraphrase = text("paraphrase", r.paraphrase.as_deref())?;
            let locality = r.locality.as_ref().ok_or("missing locality")?;
            let edit = KnowledgeFact {
                query: query.clone(),
                new_answer: new.clone(),
                old_answer: Some(old.clone()),
                language: LanguageCode::english(),
            };
            let edited = KnowledgeTriple::new(nfc(r.subject.trim()), r.relation.trim(), new.clone());
            let portability =
                one_hop_portability(&graph, &edit, &edited, &templates).map_err(|e| format!("portability: {e}"))?;
            let tests = vec![
                test(QueryKind::Reliability, query.clone(), new.clone(), Some(old.clone())),
                test(QueryKind::Generality, paraphrase, new.clone(), Some(old.clone())),
                test(
                    QueryKind::Locality,
                    text("locality prompt", Some(&locality.prompt))?,
                    text("locality answer", Some(&locality.answer))?,
                    None,
                ),
                (QueryKind::Portability, portability),
            ];
            Ok(english_entry(TaskId::Wfd, index, query, new, Some(old), tests))
        })
        .collect())
}
