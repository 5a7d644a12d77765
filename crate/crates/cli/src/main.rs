mod analyze;
mod build;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{EmbedderBackend, TranslatorBackend};
use xlke::runner::Method;
use xlke::{LanguageCode, TaskId};

/// Cross-lingual in-context knowledge-editing benchmark tool.
///
/// Exit status: 0 success, 2 usage or validation failure, 3 partial run
/// (progress checkpointed, resume with `run --resume`).
#[derive(Debug, Parser)]
#[command(name = "xlke", version)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Unify a raw dataset, optionally translate it, and print statistics.
    Build {
        /// Task tag: zsre, counterfact or wfd.
        task: TaskId,
        /// Raw data directory, or the main raw file inside it.
        source: PathBuf,
        /// Output .jsonl file, or a directory that receives `<task>.jsonl`.
        out: PathBuf,
        /// Target languages to add, comma separated.
        #[arg(long, value_delimiter = ',')]
        expand: Vec<LanguageCode>,
        #[arg(long, value_enum)]
        translator: Option<TranslatorBackend>,
        /// Added to every entry index, to keep splits' ids apart.
        #[arg(long, default_value_t = 0)]
        id_offset: usize,
        #[arg(long, default_value_t = 4)]
        max_concurrency: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print statistics as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Embed a demonstration corpus into a vector store.
    Embed {
        /// Corpus file of unified entries.
        corpus: PathBuf,
        /// Vector store to create or refresh.
        #[arg(long)]
        store: PathBuf,
        /// Language of the entries to embed.
        #[arg(long, default_value = "en")]
        lang: LanguageCode,
        #[arg(long, value_enum)]
        embedder: Option<EmbedderBackend>,
        #[arg(long, default_value_t = 4)]
        max_concurrency: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run an evaluation, or resume an interrupted one.
    Run {
        config: PathBuf,
        /// prompt, mike_random or mike_search.
        #[arg(long)]
        method: Option<Method>,
        /// Greedy decoding.
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Target languages, comma separated.
        #[arg(long, value_delimiter = ',')]
        langs: Vec<LanguageCode>,
        /// Run directory (default: `<run.out_dir>/<method>-<task>`).
        #[arg(long, conflicts_with = "resume")]
        out: Option<PathBuf>,
        /// Continue the run in this directory.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many new records, leaving a resumable run.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Compare runs and correlate per-language scores with typological similarity.
    Analyze {
        /// Completed run directories (one per method and task).
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Language profile CSV (default: the bundled table).
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Directory for the comparison, correlation and per-language CSVs.
        #[arg(long)]
        out: PathBuf,
        /// Correlate each query kind pooled over tasks instead of per task.
        #[arg(long)]
        pooled: bool,
        /// Print results as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Per-language score table of one run.
    Report {
        run: PathBuf,
        /// Also write the table as plot-data CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

/// An error with the exit status it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: 2,
            error: e.into(),
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Build {
            task,
            source,
            out,
            expand,
            translator,
            id_offset,
            max_concurrency,
            config,
            json,
        } => build::build(build::BuildArgs {
            task,
            source,
            out,
            expand,
            translator,
            id_offset,
            max_concurrency,
            config,
            json,
        }),
        Command::Embed {
            corpus,
            store,
            lang,
            embedder,
            max_concurrency,
            config,
        } => build::embed(&corpus, &store, &lang, embedder, max_concurrency, config.as_deref()),
        Command::Run {
            config,
            method,
            deterministic,
            seed,
            langs,
            out,
            resume,
            stop_after,
        } => run::run(run::RunArgs {
            config,
            method,
            deterministic,
            seed,
            langs,
            out,
            resume,
            stop_after,
        }),
        Command::Analyze {
            runs,
            profiles,
            out,
            pooled,
            json,
        } => analyze::analyze(&runs, profiles.as_deref(), &out, pooled, json),
        Command::Report { run, csv, json } => analyze::report(&run, csv.as_deref(), json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", describe(&f.error));
            ExitCode::from(f.code)
        }
    }
}

/// The error chain joined with ": ", leaving out causes that an outer
/// message already quotes.
fn describe(error: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in error.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}
