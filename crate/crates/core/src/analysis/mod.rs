//! Per-language transfer scores, method comparisons, and correlation of
//! transfer with typological similarity to English.

mod pearson;
mod profiles;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use pearson::{pearson, Correlation, PearsonError};
pub use profiles::{
    bundled_profiles, load_profiles, parse_profiles, Feature, LanguageProfile, ProfileError, ProfileRegistry,
};

use crate::lang::LanguageCode;
use crate::metrics::{Metric, MetricSelection};
use crate::model::{QueryKind, TaskId};
use crate::runner::{
    read_aggregates, stored_config, AggregateRow, Manifest, Method, RunError, RunStatus, AGGREGATES_FILE,
    ALL_LANGUAGES, MANIFEST_FILE,
};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("{0} is not a complete run")]
    Incomplete(PathBuf),
    #[error("no per-language scores to report")]
    Empty,
}

/// The headline metric of an objective: F1 where the task uses F1/EM, S
/// where it uses S/M.
pub fn primary_metric(task: TaskId, kind: QueryKind) -> Metric {
    MetricSelection::metrics(task, kind)[0]
}

/// A completed run's aggregates with the config facts analysis needs.
#[derive(Debug, Clone)]
pub struct RunResults {
    pub dir: PathBuf,
    pub task: TaskId,
    pub method: Method,
    pub aggregates: Vec<AggregateRow>,
}

pub fn load_run(dir: &Path) -> Result<RunResults, AnalysisError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = Manifest::read(&manifest_path).map_err(|source| AnalysisError::Io {
        path: manifest_path,
        source,
    })?;
    if manifest.status != RunStatus::Complete {
        return Err(AnalysisError::Incomplete(dir.to_path_buf()));
    }
    let config = stored_config(dir)?;
    let agg_path = dir.join(AGGREGATES_FILE);
    let aggregates = read_aggregates(&agg_path).map_err(|source| AnalysisError::Io { path: agg_path, source })?;
    Ok(RunResults {
        dir: dir.to_path_buf(),
        task: config.task,
        method: config.method,
        aggregates,
    })
}

/// A correlation target: a query kind, optionally restricted to one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Objective {
    pub task: Option<TaskId>,
    pub kind: QueryKind,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.task {
            Some(t) => write!(f, "{t}:{}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

pub type LanguageScores = BTreeMap<Objective, BTreeMap<LanguageCode, f64>>;

/// Per-language primary-metric scores for each objective. Per task by
/// default; `pooled` averages each kind over the tasks present. Several
/// runs of the same task are averaged.
pub fn language_scores(runs: &[&RunResults], pooled: bool) -> LanguageScores {
    let mut sums: BTreeMap<Objective, BTreeMap<LanguageCode, (f64, usize)>> = BTreeMap::new();
    for run in runs {
        for row in &run.aggregates {
            if row.language == ALL_LANGUAGES || row.metric != primary_metric(run.task, row.kind) {
                continue;
            }
            let Ok(lang) = LanguageCode::new(&row.language) else {
                warn!("{}: ignoring unknown language {}", run.dir.display(), row.language);
                continue;
            };
            let objective = Objective {
                task: (!pooled).then_some(run.task),
                kind: row.kind,
            };
            let slot = sums.entry(objective).or_default().entry(lang).or_insert((0.0, 0));
            slot.0 += row.value;
            slot.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(o, langs)| (o, langs.into_iter().map(|(l, (s, c))| (l, s / c as f64)).collect()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationCell {
    pub feature: Feature,
    pub objective: Objective,
    /// Languages that had both a score and a profile.
    pub n: usize,
    pub r: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
    /// Why the cell has no value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unavailable: Option<String>,
}

/// One cell per (feature, objective), feature-major. Languages missing a
/// profile are dropped for that cell and logged; cells with fewer than three
/// usable languages, or a constant series, are marked unavailable.
pub fn correlation_matrix(scores: &LanguageScores, profiles: &ProfileRegistry) -> Vec<CorrelationCell> {
    for (objective, langs) in scores {
        let missing: Vec<&str> = langs
            .keys()
            .filter(|l| profiles.get(l).is_none())
            .map(|l| l.as_str())
            .collect();
        if !missing.is_empty() {
            info!("{objective}: no profile for {}, dropped", missing.join(", "));
        }
    }
    let cells: Vec<(Feature, &Objective, &BTreeMap<LanguageCode, f64>)> = Feature::ALL
        .into_iter()
        .flat_map(|f| scores.iter().map(move |(o, s)| (f, o, s)))
        .collect();
    cells
        .into_par_iter()
        .map(|(feature, objective, langs)| {
            let (x, y): (Vec<f64>, Vec<f64>) = langs
                .iter()
                .filter(|(_, v)| v.is_finite())
                .filter_map(|(l, &v)| profiles.get(l).map(|p| (p.similarity(feature), v)))
                .unzip();
            let n = x.len();
            match pearson(&x, &y) {
                Ok(c) => CorrelationCell {
                    feature,
                    objective: *objective,
                    n,
                    r: Some(c.r),
                    p_value: Some(c.p_value),
                    significant: c.p_value < SIGNIFICANCE_LEVEL,
                    unavailable: None,
                },
                Err(e) => CorrelationCell {
                    feature,
                    objective: *objective,
                    n,
                    r: None,
                    p_value: None,
                    significant: false,
                    unavailable: Some(e.to_string()),
                },
            }
        })
        .collect()
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Heatmap plot data: feature, objective, r, p, significant.
pub fn heatmap_csv(cells: &[CorrelationCell]) -> String {
    csv_string(
        &["feature", "objective", "r", "p", "significant"],
        cells.iter().map(|c| {
            vec![
                c.feature.to_string(),
                c.objective.to_string(),
                opt(c.r),
                opt(c.p_value),
                c.significant.to_string(),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanguageRow {
    pub language: String,
    pub scores: BTreeMap<QueryKind, f64>,
    /// Mean of the objective scores present.
    pub mean: f64,
}

/// One row per target language with its primary-metric score per objective
/// and their mean.
pub fn per_language_report(task: TaskId, aggregates: &[AggregateRow]) -> Result<Vec<LanguageRow>, AnalysisError> {
    let mut by_lang: BTreeMap<&str, BTreeMap<QueryKind, f64>> = BTreeMap::new();
    for row in aggregates {
        if row.language != ALL_LANGUAGES && row.metric == primary_metric(task, row.kind) {
            by_lang.entry(&row.language).or_default().insert(row.kind, row.value);
        }
    }
    if by_lang.is_empty() {
        return Err(AnalysisError::Empty);
    }
    Ok(by_lang
        .into_iter()
        .map(|(language, scores)| LanguageRow {
            language: language.to_string(),
            mean: scores.values().sum::<f64>() / scores.len() as f64,
            scores,
        })
        .collect())
}

/// Bar-chart plot data: language, one column per objective, mean.
pub fn language_rows_csv(rows: &[LanguageRow]) -> String {
    let mut header = vec!["language"];
    header.extend(QueryKind::ALL.iter().map(|k| k.as_str()));
    header.push("mean");
    csv_string(
        &header,
        rows.iter().map(|r| {
            let mut out = vec![r.language.clone()];
            out.extend(QueryKind::ALL.iter().map(|k| opt(r.scores.get(k).copied())));
            out.push(r.mean.to_string());
            out
        }),
    )
}

/// Fixed-width table of [`LanguageRow`]s for terminals.
pub fn format_language_table(rows: &[LanguageRow]) -> String {
    let mut out = format!("{:<8}", "lang");
    for k in QueryKind::ALL {
        out.push_str(&format!(" {:>12}", k.as_str()));
    }
    out.push_str(&format!(" {:>8}\n", "mean"));
    for r in rows {
        out.push_str(&format!("{:<8}", r.language));
        for k in QueryKind::ALL {
            match r.scores.get(&k) {
                Some(v) => out.push_str(&format!(" {v:>12.2}")),
                None => out.push_str(&format!(" {:>12}", "-")),
            }
        }
        out.push_str(&format!(" {:>8.2}\n", r.mean));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub task: TaskId,
    pub kind: QueryKind,
    pub metric: Metric,
    /// Macro average over target languages.
    pub value: f64,
    pub languages: usize,
}

/// Method x objective x metric rows from the cross-language aggregates,
/// ordered by task, method, kind, metric.
pub fn comparison_table(runs: &[RunResults]) -> Vec<ComparisonRow> {
    let mut rows: Vec<ComparisonRow> = runs
        .iter()
        .flat_map(|run| {
            run.aggregates
                .iter()
                .filter(|a| a.language == ALL_LANGUAGES)
                .map(|a| ComparisonRow {
                    method: run.method,
                    task: run.task,
                    kind: a.kind,
                    metric: a.metric,
                    value: a.value,
                    languages: a.count,
                })
        })
        .collect();
    rows.sort_by_key(|r| (r.task, r.method, r.kind, r.metric));
    rows
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    csv_string(
        &["method", "task", "objective", "metric", "value", "languages"],
        rows.iter().map(|r| {
            vec![
                r.method.to_string(),
                r.task.to_string(),
                r.kind.to_string(),
                r.metric.to_string(),
                r.value.to_string(),
                r.languages.to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests;
