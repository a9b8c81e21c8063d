//! Benchmark grid runner and report writers.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use elect_core::bench::{evaluate_task, BenchParams, BenchTask, ExperimentGrid, MetricsRow};
use elect_core::engine::EngineConfig;
use elect_core::pareto::{summarize, ParetoPoint};
use rayon::prelude::*;
use serde::Serialize;

pub const CSV_HEADER: [&str; 11] = [
    "task",
    "method",
    "n",
    "candidate_id",
    "seed",
    "stop_step",
    "nfe",
    "bg_mse",
    "psnr",
    "ssim",
    "gt_bg_mse",
];

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub bench_seed: u64,
    pub tasks: usize,
    pub params: BenchParams,
    pub grid: ExperimentGrid,
    pub config: EngineConfig,
    pub points: Vec<ParetoPoint>,
}

/// Evaluates every task on a pool of `jobs` threads (`None` = all cores).
/// Rows come back in task order whatever the thread count.
pub fn run_grid(
    tasks: &[BenchTask],
    grid: &ExperimentGrid,
    cfg: &EngineConfig,
    jobs: Option<usize>,
) -> Result<Vec<MetricsRow>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().context("starting worker pool")?;
    let per_task: Vec<Vec<MetricsRow>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| evaluate_task(t, grid, cfg).with_context(|| format!("task {}", t.id)))
            .collect::<Result<_>>()
    })?;
    Ok(per_task.into_iter().flatten().collect())
}

/// Fixed-precision float text so reports are byte-stable.
pub fn fmt_float(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.9e}")
    }
}

pub fn write_results_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.task.to_string(),
            r.method.as_str().to_string(),
            r.n.to_string(),
            r.candidate_id.to_string(),
            r.seed.to_string(),
            r.stop_step.to_string(),
            r.nfe.to_string(),
            fmt_float(r.metrics.bg_mse),
            fmt_float(r.metrics.psnr),
            fmt_float(r.metrics.ssim),
            fmt_float(r.gt_bg_mse),
        ])?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Runs the grid and writes `results.csv` and `summary.json` into `out`.
pub fn run_experiment(
    tasks: &[BenchTask],
    bench_seed: u64,
    params: &BenchParams,
    grid: &ExperimentGrid,
    cfg: &EngineConfig,
    jobs: Option<usize>,
    out: &Path,
) -> Result<Summary> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let rows = run_grid(tasks, grid, cfg, jobs)?;
    write_results_csv(&out.join("results.csv"), &rows)?;
    let summary = Summary {
        bench_seed,
        tasks: tasks.len(),
        params: params.clone(),
        grid: grid.clone(),
        config: cfg.clone(),
        points: summarize(&rows),
    };
    write_summary(&out.join("summary.json"), &summary)?;
    Ok(summary)
}
