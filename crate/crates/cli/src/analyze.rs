use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use log::warn;
use serde::Serialize;
use xlke::analysis::{
    bundled_profiles, comparison_csv, comparison_table, correlation_matrix, format_language_table, heatmap_csv,
    language_rows_csv, language_scores, load_profiles, load_run, per_language_report, ComparisonRow, CorrelationCell,
    LanguageRow, RunResults,
};
use xlke::runner::Method;

use crate::Outcome;

#[derive(Serialize)]
struct MethodCorrelation<'a> {
    method: Method,
    cells: &'a [CorrelationCell],
}

#[derive(Serialize)]
struct AnalyzeOutput<'a> {
    comparison: &'a [ComparisonRow],
    correlations: Vec<MethodCorrelation<'a>>,
}

pub fn analyze(
    run_dirs: &[std::path::PathBuf],
    profiles: Option<&Path>,
    out: &Path,
    pooled: bool,
    json: bool,
) -> Outcome {
    let profiles = match profiles {
        Some(p) => load_profiles(p).with_context(|| format!("loading profiles {}", p.display()))?,
        None => bundled_profiles(),
    };
    let runs: Vec<RunResults> = run_dirs
        .iter()
        .map(|d| load_run(d).with_context(|| format!("loading run {}", d.display())))
        .collect::<Result<_, _>>()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let comparison = comparison_table(&runs);
    write(out, "comparison.csv", &comparison_csv(&comparison))?;

    let mut by_method: BTreeMap<Method, Vec<&RunResults>> = BTreeMap::new();
    for run in &runs {
        by_method.entry(run.method).or_default().push(run);
    }
    let mut grids = Vec::new();
    for (method, group) in &by_method {
        let scores = language_scores(group, pooled);
        let cells = correlation_matrix(&scores, &profiles);
        let unavailable = cells.iter().filter(|c| c.r.is_none()).count();
        if unavailable > 0 {
            warn!(
                "{method}: {unavailable} of {} correlation cells unavailable",
                cells.len()
            );
        }
        write(out, &format!("correlation-{method}.csv"), &heatmap_csv(&cells))?;
        for run in group {
            let rows = per_language_report(run.task, &run.aggregates)?;
            write(
                out,
                &format!("languages-{method}-{}.csv", run.task),
                &language_rows_csv(&rows),
            )?;
        }
        grids.push((*method, cells));
    }

    if json {
        let output = AnalyzeOutput {
            comparison: &comparison,
            correlations: grids
                .iter()
                .map(|(method, cells)| MethodCorrelation { method: *method, cells })
                .collect(),
        };
        println!("{}", serde_json::to_string_pretty(&output)?);
    } else {
        println!(
            "{:<12} {:<12} {:<12} {:<6} {:>8}",
            "method", "task", "objective", "metric", "value"
        );
        for r in &comparison {
            println!(
                "{:<12} {:<12} {:<12} {:<6} {:>8.2}",
                r.method.to_string(),
                r.task.to_string(),
                r.kind.to_string(),
                r.metric.to_string(),
                r.value
            );
        }
        println!("outputs written to {}", out.display());
    }
    Ok(())
}

fn write(dir: &Path, name: &str, content: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct ReportOutput<'a> {
    method: Method,
    task: xlke::TaskId,
    languages: &'a [LanguageRow],
}

pub fn report(run_dir: &Path, csv: Option<&Path>, json: bool) -> Outcome {
    let run = load_run(run_dir).with_context(|| format!("loading run {}", run_dir.display()))?;
    let rows = per_language_report(run.task, &run.aggregates)?;
    if let Some(path) = csv {
        fs::write(path, language_rows_csv(&rows)).with_context(|| format!("writing {}", path.display()))?;
    }
    if json {
        let output = ReportOutput {
            method: run.method,
            task: run.task,
            languages: &rows,
        };
        println!("{}", serde_json::to_string_pretty(&output)?);
    } else {
        println!("{} on {} (primary metric per objective)", run.method, run.task);
        print!("{}", format_language_table(&rows));
    }
    Ok(())
}
