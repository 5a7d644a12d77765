use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::lang::LanguageCode;
use crate::metrics::{aggregate, macro_aggregate, Metric, MetricValue};
use crate::model::QueryKind;

use super::Method;

/// Language column value for rows macro-averaged over target languages.
pub const ALL_LANGUAGES: &str = "ALL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemMetric {
    pub name: Metric,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub entry_id: String,
    pub kind: QueryKind,
    pub method: Method,
    pub language: LanguageCode,
    pub metrics: Vec<ItemMetric>,
    pub raw_prediction: String,
    pub prompt_fingerprint: String,
    pub demo_count: usize,
    /// Normalized probabilities of the new and original answers (S/M kinds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<[f64; 2]>,
    /// Why metrics are absent, when they are.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl EvalRecord {
    pub fn key(&self) -> (String, LanguageCode, QueryKind) {
        (self.entry_id.clone(), self.language.clone(), self.kind)
    }

    pub fn metric(&self, name: Metric) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }
}

/// Canonical order: entry id, language, kind.
pub fn sort_records(records: &mut [EvalRecord]) {
    records.sort_by(|a, b| {
        a.entry_id
            .cmp(&b.entry_id)
            .then_with(|| a.language.cmp(&b.language))
            .then_with(|| a.kind.cmp(&b.kind))
    });
}

pub fn record_line(record: &EvalRecord) -> String {
    serde_json::to_string(record).expect("records always serialize")
}

/// Reads a records file. A final line without a newline that fails to parse
/// is the remnant of an interrupted append and is returned separately as
/// `false` in the flag; any other bad line is an error.
pub fn read_records(path: &Path) -> io::Result<(Vec<EvalRecord>, bool)> {
    let file = fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut line = String::new();
    let mut clean = true;
    let mut number = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        number += 1;
        let complete = line.ends_with('\n');
        let text = line.trim_end_matches(['\n', '\r']);
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str::<EvalRecord>(text) {
            Ok(r) => out.push(r),
            Err(_) if !complete => {
                clean = false;
                break;
            }
            Err(e) => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}: line {number}: {e}", path.display()),
                ))
            }
        }
    }
    Ok((out, clean))
}

pub fn write_records(records: &[EvalRecord], path: &Path) -> io::Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&record_line(r));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub language: String,
    pub kind: QueryKind,
    pub metric: Metric,
    pub value: f64,
    pub count: usize,
}

/// Per (language, kind, metric) means, then one macro-averaged
/// [`ALL_LANGUAGES`] row per (kind, metric) over the languages present.
pub fn compute_aggregates(records: &[EvalRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, QueryKind, Metric), Vec<f64>> = BTreeMap::new();
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.entry_id, &a.language, a.kind).cmp(&(&b.entry_id, &b.language, b.kind)));
    for r in sorted {
        for m in &r.metrics {
            groups
                .entry((r.language.as_str().to_string(), r.kind, m.name))
                .or_default()
                .push(m.value);
        }
    }
    let mut rows = Vec::new();
    let mut per_objective: BTreeMap<(QueryKind, Metric), Vec<MetricValue>> = BTreeMap::new();
    for ((language, kind, metric), values) in groups {
        let v = aggregate(metric, &values).expect("groups are non-empty and in range");
        per_objective.entry((kind, metric)).or_default().push(v);
        rows.push(AggregateRow {
            language,
            kind,
            metric,
            value: v.value,
            count: v.count,
        });
    }
    for ((kind, metric), values) in per_objective {
        let v = macro_aggregate(&values).expect("non-empty, single metric");
        rows.push(AggregateRow {
            language: ALL_LANGUAGES.into(),
            kind,
            metric,
            value: v.value,
            count: v.count,
        });
    }
    rows
}

pub fn aggregates_csv(rows: &[AggregateRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["language", "kind", "metric", "value", "count"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.language.clone(),
            r.kind.as_str().to_string(),
            r.metric.as_str().to_string(),
            r.value.to_string(),
            r.count.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of utf-8 fields")
}

pub fn read_aggregates(path: &Path) -> io::Result<Vec<AggregateRow>> {
    let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {m}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 columns, found {}", rec.len())));
        }
        rows.push(AggregateRow {
            language: rec[0].to_string(),
            kind: rec[1]
                .parse()
                .map_err(|e: crate::model::UnknownTag| bad(e.to_string()))?,
            metric: rec[2]
                .parse()
                .map_err(|e: crate::model::UnknownTag| bad(e.to_string()))?,
            value: rec[3].parse().map_err(|_| bad(format!("bad value {:?}", &rec[3])))?,
            count: rec[4].parse().map_err(|_| bad(format!("bad count {:?}", &rec[4])))?,
        });
    }
    Ok(rows)
}

/// Content hash in the form git uses for blobs, over SHA-256.
pub fn git_blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Partial,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: RunStatus,
    pub expected_records: usize,
    pub records: usize,
    pub skipped: usize,
    /// File name to content hash.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn read(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, lang: &str, kind: QueryKind, f1: f64) -> EvalRecord {
        EvalRecord {
            entry_id: id.into(),
            kind,
            method: Method::MikeRandom,
            language: LanguageCode::new(lang).unwrap(),
            metrics: vec![
                ItemMetric {
                    name: Metric::F1,
                    value: f1,
                },
                ItemMetric {
                    name: Metric::EM,
                    value: if f1 == 100.0 { 100.0 } else { 0.0 },
                },
            ],
            raw_prediction: String::new(),
            prompt_fingerprint: "0000000000000000".into(),
            demo_count: 8,
            probabilities: None,
            skipped: None,
        }
    }

    #[test]
    fn git_blob_hash_of_empty_content() {
        // sha256 of "blob 0\0"
        assert_eq!(
            git_blob_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn aggregates_macro_over_languages() {
        let records = vec![
            rec("zsre-000000-de", "de", QueryKind::Reliability, 100.0),
            rec("zsre-000001-de", "de", QueryKind::Reliability, 0.0),
            rec("zsre-000000-ja", "ja", QueryKind::Reliability, 100.0),
        ];
        let rows = compute_aggregates(&records);
        let f1: Vec<_> = rows.iter().filter(|r| r.metric == Metric::F1).collect();
        assert_eq!(f1.len(), 3);
        assert_eq!((f1[0].language.as_str(), f1[0].value, f1[0].count), ("de", 50.0, 2));
        assert_eq!((f1[1].language.as_str(), f1[1].value), ("ja", 100.0));
        assert_eq!((f1[2].language.as_str(), f1[2].value, f1[2].count), ("ALL", 75.0, 2));
    }

    #[test]
    fn aggregates_are_order_independent() {
        let mut records = vec![
            rec("zsre-000000-de", "de", QueryKind::Reliability, 33.3),
            rec("zsre-000001-de", "de", QueryKind::Reliability, 66.7),
            rec("zsre-000002-de", "de", QueryKind::Reliability, 12.1),
        ];
        let a = aggregates_csv(&compute_aggregates(&records));
        records.reverse();
        assert_eq!(a, aggregates_csv(&compute_aggregates(&records)));
    }

    #[test]
    fn aggregates_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = compute_aggregates(&[rec("zsre-000000-de", "de", QueryKind::Locality, 40.0)]);
        let path = dir.path().join("aggregates.csv");
        fs::write(&path, aggregates_csv(&rows)).unwrap();
        assert_eq!(read_aggregates(&path).unwrap(), rows);
    }

    #[test]
    fn truncated_tail_is_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let full = record_line(&rec("zsre-000000-de", "de", QueryKind::Reliability, 1.0));
        fs::write(&path, format!("{full}\n{}", &full[..20])).unwrap();
        let (records, clean) = read_records(&path).unwrap();
        assert_eq!(records.len(), 1);
        assert!(!clean);
        fs::write(&path, format!("{}\n{full}\n", &full[..20])).unwrap();
        assert!(read_records(&path).is_err());
    }
}
