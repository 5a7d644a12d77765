use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::info;
use serde::Serialize;
use xlke::dataset::{corpus_stats, expand_language, ingest, CorpusStats};
use xlke::model::{read_entries, write_entries};
use xlke::retrieval::{embed_corpus, DemoCorpus};
use xlke::{LanguageCode, TaskId};

use crate::config::{EmbedderBackend, FileConfig, TranslatorBackend};
use crate::Outcome;

pub struct BuildArgs {
    pub task: TaskId,
    pub source: PathBuf,
    pub out: PathBuf,
    pub expand: Vec<LanguageCode>,
    pub translator: Option<TranslatorBackend>,
    pub id_offset: usize,
    pub max_concurrency: usize,
    pub config: Option<PathBuf>,
    pub json: bool,
}

#[derive(Serialize)]
struct BuildSummary<'a> {
    output: &'a Path,
    stats: &'a CorpusStats,
    dropped: usize,
    languages: Vec<&'a str>,
    entries: usize,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    match path {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

pub fn output_file(out: &Path, task: TaskId) -> PathBuf {
    if out.extension().is_some_and(|e| e == "jsonl") {
        out.to_path_buf()
    } else {
        out.join(format!("{task}.jsonl"))
    }
}

pub fn build(args: BuildArgs) -> Outcome {
    let config = load_config(args.config.as_deref())?;
    let mut report = ingest(args.task, &args.source)?;
    report.offset_ids(args.id_offset);
    for d in &report.dropped {
        info!("dropped raw record {}: {}", d.index, d.reason);
    }
    if report.entries.is_empty() {
        return Err(anyhow!("no valid {} records in {}", args.task, args.source.display()).into());
    }
    let stats = corpus_stats(&report.entries)?;

    let mut all = report.entries.clone();
    if !args.expand.is_empty() {
        let translator = config.translator(args.translator)?;
        for lang in &args.expand {
            let translated = expand_language(&report.entries, lang, translator.as_ref(), args.max_concurrency)
                .with_context(|| format!("expanding into {lang}"))?;
            all.extend(translated);
        }
    }
    let path = output_file(&args.out, args.task);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    write_entries(&all, &path).with_context(|| format!("writing {}", path.display()))?;

    let mut languages = vec!["en"];
    languages.extend(args.expand.iter().map(|l| l.as_str()));
    if args.json {
        let summary = BuildSummary {
            output: &path,
            stats: &stats,
            dropped: report.dropped.len(),
            languages,
            entries: all.len(),
        };
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        println!("{:<12} {:>6} {:>6} {:>6}", "Task", "#Test", "Q-Len", "A-Len");
        println!(
            "{:<12} {:>6} {:>6.2} {:>6.2}",
            stats.task.as_str(),
            stats.count,
            stats.q_len,
            stats.a_len
        );
        println!(
            "{} entries in {} language(s) written to {}; {} raw record(s) dropped",
            all.len(),
            languages.len(),
            path.display(),
            report.dropped.len()
        );
    }
    Ok(())
}

pub fn embed(
    corpus: &Path,
    store: &Path,
    lang: &LanguageCode,
    backend: Option<EmbedderBackend>,
    max_concurrency: usize,
    config: Option<&Path>,
) -> Outcome {
    let config = load_config(config)?;
    let entries = read_entries(corpus).with_context(|| format!("reading {}", corpus.display()))?;
    let demo = DemoCorpus::new(entries.into_iter().filter(|e| &e.language == lang));
    if demo.is_empty() {
        return Err(anyhow!("{} has no {lang} entries", corpus.display()).into());
    }
    let provider = config.embedder(backend)?;
    let (_, stats) = embed_corpus(&demo, provider.as_ref(), Some(store), max_concurrency)?;
    println!(
        "{} records: {} cached, {} computed in {} provider call(s); store {}",
        demo.len(),
        stats.cached,
        stats.computed,
        stats.provider_calls,
        store.display()
    );
    Ok(())
}
