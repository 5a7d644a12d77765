//! Raw per-task record layouts, as distributed by the source datasets.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::DatasetError;

#[derive(Debug, Clone, Deserialize)]
pub struct PortabilityQa {
    #[serde(rename = "New Question")]
    pub question: String,
    #[serde(rename = "New Answer")]
    pub answer: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ZsreRecord {
    #[serde(default)]
    pub subject: String,
    pub src: String,
    pub alt: String,
    #[serde(default)]
    pub answers: Vec<String>,
    #[serde(default)]
    pub rephrase: Option<String>,
    #[serde(default)]
    pub loc: Option<String>,
    #[serde(default)]
    pub loc_ans: Option<String>,
    #[serde(default)]
    pub portability: Option<PortabilityQa>,
}

/// Extension row joined onto zsRE records by their `src` question.
#[derive(Debug, Clone, Deserialize)]
pub struct ZsrePortabilityRow {
    pub src: String,
    pub portability: PortabilityQa,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TargetStr {
    pub str: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RequestedRewrite {
    pub prompt: String,
    pub subject: String,
    #[serde(default)]
    pub relation_id: String,
    pub target_new: TargetStr,
    pub target_true: TargetStr,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CounterfactRecord {
    pub case_id: u64,
    pub requested_rewrite: RequestedRewrite,
    #[serde(default)]
    pub paraphrase_prompts: Vec<String>,
    #[serde(default)]
    pub neighborhood_prompts: Vec<String>,
    #[serde(default)]
    pub portability: Option<PortabilityQa>,
}

/// Extension row joined onto CounterFact records by `case_id`.
#[derive(Debug, Clone, Deserialize)]
pub struct CounterfactPortabilityRow {
    pub case_id: u64,
    pub portability: PortabilityQa,
}

#[derive(Debug, Clone, Deserialize)]
pub struct WfdLocality {
    pub prompt: String,
    pub answer: String,
}

/// One knowledge-base change: (subject, relation) moved from `old_object`
/// to `new_object`. `context` carries surrounding triples of the graph.
#[derive(Debug, Clone, Deserialize)]
pub struct WfdRecord {
    pub subject: String,
    pub relation: String,
    pub old_object: String,
    pub new_object: String,
    pub prompt: String,
    #[serde(default)]
    pub paraphrase: Option<String>,
    #[serde(default)]
    pub locality: Option<WfdLocality>,
    #[serde(default)]
    pub context: Vec<[String; 3]>,
}

/// Reads either a JSON array or one JSON object per line.
pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let parse_err = |line: usize, e: serde_json::Error| DatasetError::RawParse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    };
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).map_err(|e| parse_err(e.line(), e));
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(i + 1, e)))
        .collect()
}

/// Finds `<dir>/<stem>.jsonl` or `<dir>/<stem>.json`.
pub fn locate(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["jsonl", "json"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

pub fn zsre_portability_index(rows: Vec<ZsrePortabilityRow>) -> HashMap<String, PortabilityQa> {
    rows.into_iter()
        .map(|r| (r.src.trim().to_string(), r.portability))
        .collect()
}

pub fn counterfact_portability_index(rows: Vec<CounterfactPortabilityRow>) -> HashMap<u64, PortabilityQa> {
    rows.into_iter().map(|r| (r.case_id, r.portability)).collect()
}
