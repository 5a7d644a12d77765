//! Evaluation runs: planning, LM calls, checkpointing and resume.

mod config;
mod records;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{Method, RunConfig};
pub use records::{
    aggregates_csv, compute_aggregates, git_blob_hash, read_aggregates, read_records, record_line, sort_records,
    write_atomic, write_records, AggregateRow, EvalRecord, ItemMetric, Manifest, RunStatus, ALL_LANGUAGES,
};

use crate::lang::LanguageCode;
use crate::lm::{extract_answer, normalized_probability, LanguageModel, LmError};
use crate::metrics::{exact_match, magnitude, perplexity_score, token_f1, Metric, MetricSelection};
use crate::model::{base_id, to_jsonl_line, validate_entry, Demonstration, QueryKind, UnifiedEntry};
use crate::prompting::{assemble, build_demonstrations, CorpusIndex, PromptError, TemplateSet};
use crate::retrieval::{
    embed_corpus, fact_text, select_random, select_search, DemoCorpus, EmbeddingProvider, EmbeddingVector,
};
use crate::text::{fnv1a64, Fingerprint};

pub const CONFIG_SNAPSHOT: &str = "config.snapshot";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const AGGREGATES_FILE: &str = "aggregates.csv";
pub const MANIFEST_FILE: &str = "manifest";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("refusing to resume: {0}")]
    RefusedResume(String),
    #[error("run directory {0} already holds a run (use resume)")]
    DirectoryInUse(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    /// The run stopped after checkpointing what it had.
    #[error("run interrupted after {completed} of {expected} records: {cause}")]
    Interrupted {
        completed: usize,
        expected: usize,
        cause: String,
    },
}

impl RunError {
    /// Process exit status: 2 for anything caught before the first LM call,
    /// 3 for a checkpointed partial run.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Interrupted { .. } => 3,
            RunError::Io { .. } => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Everything a run reads besides its config. All of it stays immutable for
/// the duration of the run.
pub struct RunInputs<'a> {
    /// Test entries in the source language and every target language.
    pub dataset: &'a [UnifiedEntry],
    /// Demonstration corpus in the source language and every target language.
    pub corpus: &'a [UnifiedEntry],
    pub lm: &'a dyn LanguageModel,
    /// Short description of the model backend, recorded in the snapshot so
    /// a resume against a different model is refused.
    pub lm_label: String,
    /// Required for [`Method::MikeSearch`].
    pub embedder: Option<&'a dyn EmbeddingProvider>,
    pub embedding_cache: Option<&'a Path>,
    pub templates: &'a TemplateSet,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Stop after this many new records, leaving a partial run behind.
    pub stop_after: Option<usize>,
    /// Manifest refresh interval, in records.
    pub checkpoint_every: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            stop_after: None,
            checkpoint_every: 25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub status: RunStatus,
    pub expected: usize,
    pub records: usize,
    pub new_records: usize,
    pub lm_calls: usize,
    pub skipped: usize,
    /// Empty unless the run completed.
    pub aggregates: Vec<AggregateRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct InputDigest {
    dataset: String,
    corpus: String,
    lm: String,
    templates: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Snapshot {
    config: RunConfig,
    inputs: InputDigest,
}

impl Snapshot {
    fn render(&self) -> String {
        toml::to_string(self).expect("validated configs serialize")
    }
}

fn entries_digest(entries: &[UnifiedEntry]) -> String {
    let mut sorted: Vec<&UnifiedEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut text = String::new();
    for e in sorted {
        text.push_str(&to_jsonl_line(e));
        text.push('\n');
    }
    git_blob_hash(text.as_bytes())
}

/// One (entry, target language) pair with its demonstrations.
struct Unit<'a> {
    source: &'a UnifiedEntry,
    target: &'a UnifiedEntry,
    demos: Vec<Demonstration>,
}

struct Plan<'a> {
    units: Vec<Unit<'a>>,
}

fn check_entries(label: &str, entries: &[UnifiedEntry], config: &RunConfig, problems: &mut Vec<String>) {
    for e in entries {
        for v in validate_entry(e) {
            problems.push(format!("{label} {}: {v}", e.id));
        }
        if e.task != config.task {
            problems.push(format!(
                "{label} {}: task {} but the run is {}",
                e.id, e.task, config.task
            ));
        }
    }
}

/// Keeps `k` candidates that do not share a base id with the entry under
/// test.
fn without_collision<'a>(
    candidates: impl IntoIterator<Item = &'a UnifiedEntry>,
    entry: &UnifiedEntry,
    k: usize,
) -> Vec<&'a UnifiedEntry> {
    candidates
        .into_iter()
        .filter(|c| base_id(&c.id) != entry.base_id())
        .take(k)
        .collect()
}

fn plan<'a>(config: &RunConfig, inputs: &RunInputs<'a>) -> Result<Plan<'a>, RunError> {
    let mut problems = config.validate();
    if config.seed > i64::MAX as u64 {
        problems.push(format!("seed {} does not fit in a signed 64-bit integer", config.seed));
    }
    if !problems.is_empty() {
        return Err(RunError::Validation(problems));
    }
    check_entries("dataset entry", inputs.dataset, config, &mut problems);
    check_entries("corpus entry", inputs.corpus, config, &mut problems);
    if !problems.is_empty() {
        return Err(RunError::Validation(problems));
    }

    let mut sources: Vec<&UnifiedEntry> = inputs
        .dataset
        .iter()
        .filter(|e| e.language == config.source_lang)
        .collect();
    sources.sort_by(|a, b| a.id.cmp(&b.id));
    if sources.is_empty() {
        return Err(RunError::Validation(vec![format!(
            "dataset has no {} entries",
            config.source_lang
        )]));
    }
    let dataset_index: HashMap<(&str, &LanguageCode), &'a UnifiedEntry> =
        inputs.dataset.iter().map(|e| ((e.base_id(), &e.language), e)).collect();
    let corpus_index = CorpusIndex::new(inputs.corpus.iter().cloned());
    let demo_corpus = DemoCorpus::new(
        inputs
            .corpus
            .iter()
            .filter(|e| e.language == config.source_lang)
            .cloned(),
    );

    let k = config.prompt.num_demos;
    // One extra candidate covers the single possible id collision.
    let draw = (k + 1).min(demo_corpus.len());
    let embedded: DemoCorpus;
    let selections: Vec<Vec<&UnifiedEntry>> = match config.method {
        Method::PromptBaseline => vec![Vec::new(); sources.len()],
        Method::MikeRandom => {
            let fixed = if config.redraw_per_entry {
                None
            } else {
                Some(
                    select_random(&demo_corpus, draw, config.seed)
                        .map_err(|e| RunError::Validation(vec![e.to_string()]))?,
                )
            };
            let mut out = Vec::with_capacity(sources.len());
            for entry in &sources {
                let drawn = match &fixed {
                    Some(f) => f.clone(),
                    None => select_random(&demo_corpus, draw, config.seed.wrapping_add(fnv1a64(entry.base_id())))
                        .map_err(|e| RunError::Validation(vec![e.to_string()]))?,
                };
                out.push(without_collision(drawn, entry, k));
            }
            out
        }
        Method::MikeSearch => {
            let embedder = inputs
                .embedder
                .ok_or_else(|| RunError::Validation(vec!["method mike_search needs an embedding provider".into()]))?;
            let stats;
            (embedded, stats) = embed_corpus(&demo_corpus, embedder, inputs.embedding_cache, config.max_concurrency)
                .map_err(|e| RunError::Validation(vec![format!("embedding the corpus: {e}")]))?;
            info!(
                "corpus embedded: {} cached, {} computed in {} provider calls",
                stats.cached, stats.computed, stats.provider_calls
            );
            let texts: Vec<String> = sources.iter().map(|e| fact_text(e)).collect();
            let mut vectors = Vec::with_capacity(texts.len());
            for chunk in texts.chunks(32) {
                let batch = embedder
                    .embed(chunk)
                    .map_err(|e| RunError::Validation(vec![format!("embedding test facts: {e}")]))?;
                if batch.len() != chunk.len() {
                    return Err(RunError::Validation(vec![format!(
                        "embedding provider returned {} vectors for {} texts",
                        batch.len(),
                        chunk.len()
                    )]));
                }
                vectors.extend(batch);
            }
            let mut out = Vec::with_capacity(sources.len());
            for (entry, v) in sources.iter().zip(vectors) {
                let query = EmbeddingVector::new(v).map_err(|e| RunError::Validation(vec![e.to_string()]))?;
                let ranked = select_search(&embedded, &query, draw)
                    .map_err(|e| RunError::Validation(vec![format!("{}: {e}", entry.id)]))?;
                let chosen = without_collision(ranked.iter().map(|r| r.entry), entry, k);
                out.push(chosen);
            }
            out
        }
    };

    let mut units = Vec::with_capacity(sources.len() * config.target_langs.len());
    for (entry, selected) in sources.iter().zip(&selections) {
        for lang in &config.target_langs {
            let Some(&target) = dataset_index.get(&(entry.base_id(), lang)) else {
                problems.push(format!("dataset has no {lang} counterpart of {}", entry.id));
                continue;
            };
            let demos = match build_demonstrations(selected, &config.prompt, &config.source_lang, lang, &corpus_index) {
                Ok(d) => d,
                Err(e) => {
                    problems.push(format!("{} ({lang}): {e}", entry.id));
                    continue;
                }
            };
            for kind in QueryKind::ALL {
                let test = target.test(kind).expect("validated entries have every kind");
                if let Err(e @ PromptError::Template(_)) = assemble(
                    config.task,
                    &entry.edit,
                    &demos,
                    &test.query,
                    &config.prompt,
                    inputs.templates,
                ) {
                    problems.push(format!("{} ({lang}): {e}", entry.id));
                }
            }
            units.push(Unit {
                source: entry,
                target,
                demos,
            });
        }
    }
    if !problems.is_empty() {
        return Err(RunError::Validation(problems));
    }
    Ok(Plan { units })
}

enum Outcome {
    Record(EvalRecord),
    Failed(String),
}

struct Evaluator<'a> {
    config: &'a RunConfig,
    inputs: &'a RunInputs<'a>,
    lm_calls: AtomicUsize,
}

impl Evaluator<'_> {
    fn evaluate(&self, unit: &Unit<'_>, kind: QueryKind) -> Result<EvalRecord, LmError> {
        let config = self.config;
        let lang = &unit.target.language;
        let test = unit.target.test(kind).expect("validated entries have every kind");
        let mut record = EvalRecord {
            entry_id: unit.target.id.clone(),
            kind,
            method: config.method,
            language: lang.clone(),
            metrics: Vec::new(),
            raw_prediction: String::new(),
            prompt_fingerprint: String::new(),
            demo_count: 0,
            probabilities: None,
            skipped: None,
        };
        let prompt = match assemble(
            config.task,
            &unit.source.edit,
            &unit.demos,
            &test.query,
            &config.prompt,
            self.inputs.templates,
        ) {
            Ok(p) => p,
            Err(e) => {
                warn!("{} {} skipped: {e}", unit.target.id, kind);
                record.skipped = Some(e.to_string());
                return Ok(record);
            }
        };
        record.prompt_fingerprint = Fingerprint::of(&prompt.text).to_string();
        record.demo_count = prompt.demo_count;

        if MetricSelection::uses_probability(config.task, kind) {
            let original = test
                .original_answer
                .as_deref()
                .expect("validated: S/M kinds carry an original answer");
            let scored = self
                .score(&prompt.text, &test.expected_answer)
                .and_then(|p_new| self.score(&prompt.text, original).map(|p_old| (p_new, p_old)));
            match scored {
                Ok((p_new, p_old)) => {
                    record.probabilities = Some([p_new, p_old]);
                    record.metrics = vec![
                        ItemMetric {
                            name: Metric::S,
                            value: perplexity_score(p_new, p_old).map_err(|e| LmError::Protocol(e.to_string()))?,
                        },
                        ItemMetric {
                            name: Metric::M,
                            value: magnitude(p_new, p_old).map_err(|e| LmError::Protocol(e.to_string()))?,
                        },
                    ];
                }
                Err(e @ (LmError::CapabilityUnsupported(_) | LmError::ContextOverflow(_))) => {
                    warn!("{} {} skipped: {e}", unit.target.id, kind);
                    record.skipped = Some(e.to_string());
                }
                Err(e) => return Err(e),
            }
        } else {
            self.lm_calls.fetch_add(1, Ordering::Relaxed);
            match self.inputs.lm.generate(&prompt, &config.effective_params()) {
                Ok(completion) => {
                    let answer = extract_answer(&completion.text);
                    record.raw_prediction = completion.text;
                    record.metrics = vec![
                        ItemMetric {
                            name: Metric::F1,
                            value: 100.0 * token_f1(&answer, &test.expected_answer, lang),
                        },
                        ItemMetric {
                            name: Metric::EM,
                            value: 100.0 * f64::from(exact_match(&answer, &test.expected_answer, lang)),
                        },
                    ];
                }
                Err(e @ LmError::ContextOverflow(_)) => {
                    warn!("{} {} skipped: {e}", unit.target.id, kind);
                    record.skipped = Some(e.to_string());
                }
                Err(e) => return Err(e),
            }
        }
        Ok(record)
    }

    /// Normalized probability of `answer` as a continuation, scored with the
    /// separating space the prompt's `Answer:` line implies.
    fn score(&self, prompt: &str, answer: &str) -> Result<f64, LmError> {
        self.lm_calls.fetch_add(1, Ordering::Relaxed);
        let s = self.inputs.lm.score_continuation(prompt, &format!(" {answer}"))?;
        normalized_probability(&s.logprobs())
    }
}

fn snapshot_for(config: &RunConfig, inputs: &RunInputs<'_>) -> Snapshot {
    Snapshot {
        config: config.clone(),
        inputs: InputDigest {
            dataset: entries_digest(inputs.dataset),
            corpus: entries_digest(inputs.corpus),
            lm: inputs.lm_label.clone(),
            templates: inputs.templates.id.clone(),
        },
    }
}

fn describe_mismatch(stored: &Snapshot, current: &Snapshot) -> String {
    let a = toml::Value::try_from(stored).expect("snapshot serializes");
    let b = toml::Value::try_from(current).expect("snapshot serializes");
    let mut diffs = Vec::new();
    diff_values("", &a, &b, &mut diffs);
    format!(
        "the supplied config differs from {CONFIG_SNAPSHOT} at {}",
        diffs.join(", ")
    )
}

fn diff_values(prefix: &str, a: &toml::Value, b: &toml::Value, out: &mut Vec<String>) {
    match (a, b) {
        (toml::Value::Table(ta), toml::Value::Table(tb)) => {
            let keys: std::collections::BTreeSet<&String> = ta.keys().chain(tb.keys()).collect();
            for k in keys {
                let path = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                match (ta.get(k), tb.get(k)) {
                    (Some(x), Some(y)) => diff_values(&path, x, y, out),
                    _ => out.push(path),
                }
            }
        }
        _ if a != b => out.push(prefix.to_string()),
        _ => {}
    }
}

fn file_hashes(dir: &Path, names: &[&str]) -> Result<BTreeMap<String, String>, RunError> {
    let mut out = BTreeMap::new();
    for name in names {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        out.insert(name.to_string(), git_blob_hash(&bytes));
    }
    Ok(out)
}

fn write_manifest(
    dir: &Path,
    status: RunStatus,
    expected: usize,
    records: usize,
    skipped: usize,
) -> Result<(), RunError> {
    let names: &[&str] = match status {
        RunStatus::Complete => &[CONFIG_SNAPSHOT, RECORDS_FILE, AGGREGATES_FILE],
        RunStatus::Partial => &[CONFIG_SNAPSHOT, RECORDS_FILE],
    };
    let manifest = Manifest {
        status,
        expected_records: expected,
        records,
        skipped,
        files: file_hashes(dir, names)?,
    };
    let path = dir.join(MANIFEST_FILE);
    manifest.write(&path).map_err(io_err(&path))
}

/// Starts a run in `dir`, which must be absent or empty.
pub fn run(
    dir: &Path,
    config: &RunConfig,
    inputs: &RunInputs<'_>,
    options: &RunOptions,
) -> Result<RunSummary, RunError> {
    let plan = plan(config, inputs)?;
    if dir.exists() {
        let mut contents = fs::read_dir(dir).map_err(io_err(dir))?;
        if contents.next().is_some() {
            return Err(RunError::DirectoryInUse(dir.to_path_buf()));
        }
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let snapshot = dir.join(CONFIG_SNAPSHOT);
    write_atomic(&snapshot, snapshot_for(config, inputs).render().as_bytes()).map_err(io_err(&snapshot))?;
    let records = dir.join(RECORDS_FILE);
    fs::write(&records, b"").map_err(io_err(&records))?;
    let expected = plan.units.len() * QueryKind::ALL.len();
    write_manifest(dir, RunStatus::Partial, expected, 0, 0)?;
    execute(dir, config, inputs, options, plan, Vec::new())
}

/// Continues the run in `dir`. Triples already on record are not evaluated
/// again; the config and inputs must match the stored snapshot.
pub fn resume(
    dir: &Path,
    config: &RunConfig,
    inputs: &RunInputs<'_>,
    options: &RunOptions,
) -> Result<RunSummary, RunError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(RunError::RefusedResume(format!(
            "{} has no {MANIFEST_FILE}",
            dir.display()
        )));
    }
    let snapshot_path = dir.join(CONFIG_SNAPSHOT);
    let text = fs::read_to_string(&snapshot_path).map_err(io_err(&snapshot_path))?;
    let stored: Snapshot =
        toml::from_str(&text).map_err(|e| RunError::RefusedResume(format!("unreadable {CONFIG_SNAPSHOT}: {e}")))?;
    let current = snapshot_for(config, inputs);
    // Outputs do not depend on the worker count, so it may change.
    let mut stored = stored;
    stored.config.max_concurrency = current.config.max_concurrency;
    if stored != current {
        return Err(RunError::RefusedResume(describe_mismatch(&stored, &current)));
    }
    let plan = plan(config, inputs)?;
    let records_path = dir.join(RECORDS_FILE);
    let (existing, clean) = read_records(&records_path).map_err(io_err(&records_path))?;
    if !clean {
        warn!(
            "dropping a partially written record at the end of {}",
            records_path.display()
        );
        write_records(&existing, &records_path).map_err(io_err(&records_path))?;
    }
    execute(dir, config, inputs, options, plan, existing)
}

/// Reads the config stored in a run directory.
pub fn stored_config(dir: &Path) -> Result<RunConfig, RunError> {
    let path = dir.join(CONFIG_SNAPSHOT);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let stored: Snapshot =
        toml::from_str(&text).map_err(|e| RunError::RefusedResume(format!("unreadable {CONFIG_SNAPSHOT}: {e}")))?;
    Ok(stored.config)
}

fn execute(
    dir: &Path,
    config: &RunConfig,
    inputs: &RunInputs<'_>,
    options: &RunOptions,
    plan: Plan<'_>,
    existing: Vec<EvalRecord>,
) -> Result<RunSummary, RunError> {
    let expected = plan.units.len() * QueryKind::ALL.len();
    let done: HashSet<(String, LanguageCode, QueryKind)> = existing.iter().map(EvalRecord::key).collect();
    let todo: Vec<(&Unit<'_>, QueryKind)> = plan
        .units
        .iter()
        .flat_map(|u| QueryKind::ALL.into_iter().map(move |k| (u, k)))
        .filter(|(u, k)| !done.contains(&(u.target.id.clone(), u.target.language.clone(), *k)))
        .collect();
    info!(
        "{} of {expected} records already present, {} to evaluate",
        existing.len(),
        todo.len()
    );

    let evaluator = Evaluator {
        config,
        inputs,
        lm_calls: AtomicUsize::new(0),
    };
    let claimed = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let failure: Mutex<Option<String>> = Mutex::new(None);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_concurrency)
        .build()
        .map_err(|e| RunError::Validation(vec![format!("worker pool: {e}")]))?;

    let records_path = dir.join(RECORDS_FILE);
    let mut file = OpenOptions::new()
        .append(true)
        .open(&records_path)
        .map_err(io_err(&records_path))?;
    let mut written = existing.len();
    let mut skipped = existing.iter().filter(|r| r.skipped.is_some()).count();
    let mut new_records = 0;
    let (tx, rx) = mpsc::channel::<Outcome>();

    let write_result: Result<(), RunError> = std::thread::scope(|scope| {
        let todo = &todo;
        let (evaluator, claimed, stop, failure) = (&evaluator, &claimed, &stop, &failure);
        scope.spawn(move || {
            pool.install(|| {
                todo.par_iter().for_each_with(tx, |tx, (unit, kind)| {
                    if stop.load(Ordering::SeqCst) {
                        return;
                    }
                    if let Some(limit) = options.stop_after {
                        if claimed.fetch_add(1, Ordering::SeqCst) >= limit {
                            stop.store(true, Ordering::SeqCst);
                            return;
                        }
                    }
                    let outcome = match evaluator.evaluate(unit, *kind) {
                        Ok(r) => Outcome::Record(r),
                        Err(e) => {
                            stop.store(true, Ordering::SeqCst);
                            Outcome::Failed(format!("{} {}: {e}", unit.target.id, kind))
                        }
                    };
                    let _ = tx.send(outcome);
                });
            });
        });

        for outcome in rx {
            match outcome {
                Outcome::Record(r) => {
                    let mut line = record_line(&r);
                    line.push('\n');
                    file.write_all(line.as_bytes())
                        .and_then(|_| file.flush())
                        .map_err(io_err(&records_path))?;
                    written += 1;
                    new_records += 1;
                    if r.skipped.is_some() {
                        skipped += 1;
                    }
                    if new_records % options.checkpoint_every.max(1) == 0 {
                        write_manifest(dir, RunStatus::Partial, expected, written, skipped)?;
                    }
                }
                Outcome::Failed(msg) => {
                    let mut slot = failure.lock().expect("no panics while holding the lock");
                    slot.get_or_insert(msg);
                }
            }
        }
        Ok(())
    });
    write_result?;
    drop(file);

    let lm_calls = evaluator.lm_calls.load(Ordering::Relaxed);
    info!("{new_records} new records, {lm_calls} LM calls");
    let mut summary = RunSummary {
        dir: dir.to_path_buf(),
        status: RunStatus::Partial,
        expected,
        records: written,
        new_records,
        lm_calls,
        skipped,
        aggregates: Vec::new(),
    };

    if let Some(cause) = failure.into_inner().expect("lock not poisoned") {
        write_manifest(dir, RunStatus::Partial, expected, written, skipped)?;
        return Err(RunError::Interrupted {
            completed: written,
            expected,
            cause,
        });
    }
    if written < expected {
        write_manifest(dir, RunStatus::Partial, expected, written, skipped)?;
        return Ok(summary);
    }

    let (mut all, _) = read_records(&records_path).map_err(io_err(&records_path))?;
    sort_records(&mut all);
    write_records(&all, &records_path).map_err(io_err(&records_path))?;
    let aggregates = compute_aggregates(&all);
    let agg_path = dir.join(AGGREGATES_FILE);
    write_atomic(&agg_path, aggregates_csv(&aggregates).as_bytes()).map_err(io_err(&agg_path))?;
    write_manifest(dir, RunStatus::Complete, expected, written, skipped)?;
    summary.status = RunStatus::Complete;
    summary.aggregates = aggregates;
    Ok(summary)
}
