use std::path::PathBuf;

use anyhow::Context;
use log::info;
use xlke::model::read_entries;
use xlke::runner::{self, Method, RunError, RunInputs, RunOptions, RunStatus};
use xlke::LanguageCode;

use crate::config::FileConfig;
use crate::{Failure, Outcome};

pub struct RunArgs {
    pub config: PathBuf,
    pub method: Option<Method>,
    pub deterministic: bool,
    pub seed: Option<u64>,
    pub langs: Vec<LanguageCode>,
    pub out: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub stop_after: Option<usize>,
}

fn run_failure(e: RunError) -> Failure {
    Failure {
        code: e.exit_code() as u8,
        error: e.into(),
    }
}

pub fn run(args: RunArgs) -> Outcome {
    let file = FileConfig::load(&args.config)?;
    let mut config = file.run_config(args.method)?;
    if args.deterministic {
        config.deterministic = true;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if !args.langs.is_empty() {
        config.target_langs = args.langs.clone();
    }
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(run_failure(RunError::Validation(problems)));
    }

    let dataset_path = file.require_path(&file.data.dataset, "data.dataset")?;
    let dataset = read_entries(&dataset_path).with_context(|| format!("reading {}", dataset_path.display()))?;
    let corpus = match (&file.data.corpus, config.method) {
        (_, Method::PromptBaseline) => Vec::new(),
        (Some(p), _) => {
            let path = file.resolve(p);
            read_entries(&path).with_context(|| format!("reading {}", path.display()))?
        }
        (None, m) => return Err(anyhow::anyhow!("method {m} needs config key data.corpus").into()),
    };
    let templates = file.templates()?;
    let (lm, lm_label) = file.language_model()?;
    let embedder = match config.method {
        Method::MikeSearch => Some(file.embedder(None)?),
        _ => None,
    };
    let cache = file.embedder.cache.as_ref().map(|p| file.resolve(p));
    let inputs = RunInputs {
        dataset: &dataset,
        corpus: &corpus,
        lm: lm.as_ref(),
        lm_label,
        embedder: embedder.as_deref(),
        embedding_cache: cache.as_deref(),
        templates: &templates,
    };
    let options = RunOptions {
        stop_after: args.stop_after,
        ..Default::default()
    };

    let summary = match &args.resume {
        Some(dir) => runner::resume(dir, &config, &inputs, &options),
        None => {
            let dir = match &args.out {
                Some(d) => d.clone(),
                None => {
                    let parent = file
                        .run
                        .out_dir
                        .as_ref()
                        .map(|p| file.resolve(p))
                        .unwrap_or_else(|| "runs".into());
                    parent.join(format!("{}-{}", config.method, config.task))
                }
            };
            info!("run directory {}", dir.display());
            runner::run(&dir, &config, &inputs, &options)
        }
    }
    .map_err(run_failure)?;

    println!(
        "{}: {} of {} records ({} new, {} skipped), {} new calls",
        summary.dir.display(),
        summary.records,
        summary.expected,
        summary.new_records,
        summary.skipped,
        summary.lm_calls
    );
    match summary.status {
        RunStatus::Complete => Ok(()),
        RunStatus::Partial => Err(Failure {
            code: 3,
            error: anyhow::anyhow!(
                "run stopped early; continue with `xlke run {} --resume {}`",
                args.config.display(),
                summary.dir.display()
            ),
        }),
    }
}
