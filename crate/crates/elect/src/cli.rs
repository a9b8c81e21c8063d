//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use elect_core::bench::{make_benchmark, BenchParams, BenchTask, DeltaDist, ExperimentGrid};
use elect_core::ddc::DdcConfig;
use elect_core::denoiser::{Capabilities, Denoiser, DenoiserRequest, GuidanceConfig};
use elect_core::engine::{
    best_of_n, elect_run_observed, EditTask, EngineConfig, Method, NoObserver, RelevancePooling, RunObserver,
    RunOutput, TweedieSource,
};
use elect_core::oracle::{mode_for, PointTargetOracle, SyntheticEditOracle};
use elect_core::prompt::{elect_prompt_run, EditJudgment, MllmClient, MockMllm, PromptOptions};
use elect_core::schedule::{make_schedule, ScheduleKind};
use elect_core::Tensor;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::experiment::{fmt_float, run_experiment};
use crate::io::{load_task_dir, read_elct, write_elct};
use crate::mllm_http::HttpMllm;
use crate::remote::{RemoteConfig, RemoteDenoiser};
use crate::trace::{write_trace, MapDump, TraceFile};
use crate::wire::EncodeRequest;
use crate::ConfigError;

#[derive(Debug, Parser)]
#[command(
    name = "elect",
    version,
    about = "Early-stopped seed and prompt selection for instruction-guided image editing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Seed selection with early stopping.
    Edit(EditArgs),
    /// Full inference of every candidate, then selection.
    Bestofn(EditArgs),
    /// Synthetic benchmark over a grid of methods and candidate counts.
    Bench(BenchArgs),
    /// Seed selection, judgment, and prompt selection on failure.
    PromptEdit(PromptArgs),
    /// Seed selection with per-step scores and relevance maps written out.
    Trace(EditArgs),
}

/// Where predictions come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DenoiserSpec {
    /// Oracle of a synthetic benchmark task.
    Synthetic,
    /// Point-target oracle towards the tensor in the file.
    Analytic(PathBuf),
    Remote(String),
}

fn parse_denoiser(s: &str) -> std::result::Result<DenoiserSpec, String> {
    if s == "synthetic" {
        Ok(DenoiserSpec::Synthetic)
    } else if let Some(p) = s.strip_prefix("analytic:") {
        Ok(DenoiserSpec::Analytic(PathBuf::from(p)))
    } else if let Some(u) = s.strip_prefix("remote:") {
        if u.starts_with("http://") || u.starts_with("https://") {
            Ok(DenoiserSpec::Remote(u.to_string()))
        } else {
            Err(format!("remote URL must start with http:// or https://, got {u:?}"))
        }
    } else {
        Err("expected synthetic, analytic:<target.elct> or remote:<url>".into())
    }
}

/// Parses a lowercase name through the type's serde representation.
fn parse_name<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// Timestep at which candidates are compared.
    #[arg(long, default_value_t = 60)]
    pub t_stop: usize,
    /// Number of sampling steps.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// ddim or rectified-flow.
    #[arg(long, default_value = "ddim", value_parser = parse_name::<ScheduleKind>)]
    pub schedule: ScheduleKind,
    /// Stop comparing once the best score settles.
    #[arg(long)]
    pub adaptive: bool,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long, default_value_t = 5)]
    pub ddc_window: usize,
    /// Minimum executed steps before an adaptive stop.
    #[arg(long, default_value_t = 20)]
    pub ddc_floor: usize,
    /// Leading steps whose relevance maps are averaged.
    #[arg(long, default_value_t = 20)]
    pub relevance_window: usize,
    #[arg(long, default_value_t = 1.5)]
    pub image_scale: f64,
    #[arg(long, default_value_t = 7.5)]
    pub text_scale: f64,
    /// Pick among the lowest-background-score candidates by foreground change.
    #[arg(long)]
    pub hybrid_fg: bool,
    /// guided or conditional.
    #[arg(long, default_value = "guided", value_parser = parse_name::<TweedieSource>)]
    pub tweedie_source: TweedieSource,
    /// pooled or per-candidate.
    #[arg(long, default_value = "pooled", value_parser = parse_name::<RelevancePooling>)]
    pub relevance_pooling: RelevancePooling,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl EngineArgs {
    fn config(&self, n: usize, seeds: Option<Vec<u64>>) -> Result<EngineConfig> {
        if self.jobs == Some(0) {
            return Err(ConfigError::new("--jobs must be at least 1").into());
        }
        let cfg = EngineConfig {
            n_candidates: n,
            seeds,
            t_stop: self.t_stop,
            steps: self.steps,
            schedule: self.schedule,
            adaptive: self.adaptive,
            ddc: DdcConfig {
                tau: self.tau,
                window: self.ddc_window,
            },
            ddc_floor: self.ddc_floor,
            relevance_window: self.relevance_window,
            guidance: GuidanceConfig {
                image_scale: self.image_scale,
                text_scale: self.text_scale,
            },
            hybrid_fg: self.hybrid_fg,
            tweedie_source: self.tweedie_source,
            relevance_pooling: self.relevance_pooling,
            parallel: true,
        };
        cfg.validate().map_err(|e| ConfigError::new(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TaskArgs {
    /// synthetic, analytic:<target.elct> or remote:<url>.
    #[arg(long, default_value = "synthetic", value_parser = parse_denoiser)]
    pub denoiser: DenoiserSpec,
    /// Source latent file; needs --instruction.
    #[arg(long, conflicts_with = "task_dir")]
    pub source: Option<PathBuf>,
    /// Foreground mask `[H, W]` for background metrics, used with --source.
    #[arg(long, requires = "source")]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub instruction: Option<String>,
    /// Task directory with source.elct and instruction.txt.
    #[arg(long)]
    pub task_dir: Option<PathBuf>,
    /// Image encoded into the source latent by the remote server.
    #[arg(long, conflicts_with_all = ["source", "task_dir"])]
    pub source_image: Option<PathBuf>,
    /// Remote model has no null-image branch.
    #[arg(long)]
    pub no_null_image: bool,
    /// Benchmark seed of the synthetic task used when no source is given.
    #[arg(long, default_value_t = 0)]
    pub bench_seed: u64,
    #[arg(long, default_value_t = 0)]
    pub task_index: usize,
    /// Spread of the synthetic per-seed background error.
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EditArgs {
    /// Number of candidate seeds.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Explicit seeds, comma separated; defaults to 1..=n.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub task: TaskArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Write trace.json into the output directory.
    #[arg(long)]
    pub trace: bool,
    /// Write relevance, mean and weight maps into <out>/maps.
    #[arg(long)]
    pub dump_maps: bool,
    /// Record wall-clock time in the trace.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 100)]
    pub tasks: usize,
    /// Candidate counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,10")]
    pub n: Vec<usize>,
    /// Methods, comma separated: vanilla, best_of_n, elect, elect_adaptive.
    #[arg(long, value_delimiter = ',', default_value = "vanilla,best_of_n,elect,elect_adaptive", value_parser = parse_name::<Method>)]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 0)]
    pub bench_seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MllmSpec {
    Mock,
    Http(String),
}

fn parse_mllm(s: &str) -> std::result::Result<MllmSpec, String> {
    if s == "mock" {
        Ok(MllmSpec::Mock)
    } else if let Some(u) = s.strip_prefix("http:") {
        let url = if u.starts_with("//") {
            format!("http:{u}")
        } else {
            u.to_string()
        };
        Ok(MllmSpec::Http(url))
    } else {
        Err("expected mock or http:<url>".into())
    }
}

#[derive(Debug, Clone, Args)]
pub struct PromptArgs {
    #[command(flatten)]
    pub edit: EditArgs,
    /// mock or http:<url>.
    #[arg(long, default_value = "mock", value_parser = parse_mllm)]
    pub mllm: MllmSpec,
    #[arg(long, default_value_t = 10)]
    pub n_prompts: usize,
    /// Run prompt selection even when the edit is judged a success.
    #[arg(long)]
    pub force: bool,
    /// Seed of the shared noise; defaults to the winning seed.
    #[arg(long)]
    pub noise_seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub mock_seed: u64,
    /// Judgment returned by the mock: pass or fail.
    #[arg(long, default_value = "fail", value_parser = ["pass", "fail"])]
    pub mock_judgment: String,
    #[arg(long)]
    pub evaluate_template: Option<PathBuf>,
    #[arg(long)]
    pub variants_template: Option<PathBuf>,
}

/// Any of the supported prediction sources.
pub enum Backend {
    Synthetic(SyntheticEditOracle),
    Analytic(PointTargetOracle),
    Remote(RemoteDenoiser),
}

impl Denoiser for Backend {
    fn capabilities(&self) -> Capabilities {
        match self {
            Backend::Synthetic(d) => d.capabilities(),
            Backend::Analytic(d) => d.capabilities(),
            Backend::Remote(d) => d.capabilities(),
        }
    }

    fn predict(&self, req: &DenoiserRequest<'_>) -> elect_core::Result<Tensor> {
        match self {
            Backend::Synthetic(d) => d.predict(req),
            Backend::Analytic(d) => d.predict(req),
            Backend::Remote(d) => d.predict(req),
        }
    }
}

/// A task with the means to evaluate it.
struct Resolved {
    task: EditTask,
    bench: Option<BenchTask>,
    remote: Option<RemoteDenoiser>,
    label: String,
}

fn bench_params(sigma: f64) -> BenchParams {
    BenchParams {
        delta: DeltaDist::FoldedNormal { sigma },
        ..Default::default()
    }
}

fn config_err(e: elect_core::Error) -> anyhow::Error {
    ConfigError::new(e.to_string()).into()
}

/// Connects a remote denoiser first, so an unreachable server is reported
/// before any input problem.
fn resolve(args: &TaskArgs, cfg: &EngineConfig) -> Result<Resolved> {
    let remote = match &args.denoiser {
        DenoiserSpec::Remote(url) => {
            let mut rc = RemoteConfig::new(url.clone()).map_err(config_err)?;
            rc.null_image_branch = !args.no_null_image;
            let d =
                RemoteDenoiser::connect(rc, mode_for(cfg.schedule)).with_context(|| format!("connecting to {url}"))?;
            log::info!("connected to {url}, model {}", d.model_id());
            Some(d)
        }
        _ => None,
    };
    let label = match &args.denoiser {
        DenoiserSpec::Synthetic => "synthetic".to_string(),
        DenoiserSpec::Analytic(p) => format!("analytic:{}", p.display()),
        DenoiserSpec::Remote(u) => format!("remote:{u}"),
    };
    let synthetic = args.denoiser == DenoiserSpec::Synthetic;
    if synthetic && (args.source.is_some() || args.task_dir.is_some() || args.source_image.is_some()) {
        return Err(ConfigError::new(
            "the synthetic denoiser only serves benchmark tasks; drop --source/--task-dir/--source-image",
        )
        .into());
    }
    let (task, bench) = if let Some(dir) = &args.task_dir {
        (load_task_dir(dir)?.task, None)
    } else if let Some(src) = &args.source {
        let instruction = args
            .instruction
            .clone()
            .ok_or_else(|| ConfigError::new("--source needs --instruction"))?;
        let gt_mask = args.mask.as_deref().map(read_elct).transpose()?;
        let task = EditTask {
            source_latent: read_elct(src)?,
            instruction,
            gt_mask,
        };
        (task, None)
    } else if let Some(img) = &args.source_image {
        let d = remote
            .as_ref()
            .ok_or_else(|| ConfigError::new("--source-image needs a remote denoiser"))?;
        let instruction = args
            .instruction
            .clone()
            .ok_or_else(|| ConfigError::new("--source-image needs --instruction"))?;
        let latent = d.encode(&EncodeRequest::Path {
            image_path: img.display().to_string(),
        })?;
        let task = EditTask {
            source_latent: latent,
            instruction,
            gt_mask: None,
        };
        (task, None)
    } else {
        let tasks =
            make_benchmark(args.bench_seed, args.task_index + 1, &bench_params(args.sigma)).map_err(config_err)?;
        let b = tasks.into_iter().next_back().expect("nonempty benchmark");
        let mut task = b.edit_task();
        if let Some(i) = &args.instruction {
            task.instruction = i.clone();
        }
        (task, Some(b))
    };
    Ok(Resolved {
        task,
        bench,
        remote,
        label,
    })
}

/// The prediction source for a seed run over `seeds`.
fn backend(args: &TaskArgs, r: &mut Resolved, cfg: &EngineConfig, seeds: &[u64]) -> Result<Backend> {
    Ok(match &args.denoiser {
        DenoiserSpec::Synthetic => {
            let b = r.bench.as_ref().expect("synthetic tasks come from the benchmark");
            Backend::Synthetic(b.oracle(cfg, seeds).map_err(config_err)?)
        }
        DenoiserSpec::Analytic(path) => {
            let target = read_elct(path)?;
            if target.shape() != r.task.source_latent.shape() {
                return Err(ConfigError::new(format!(
                    "target {} has shape {:?} but the source has {:?}",
                    path.display(),
                    target.shape(),
                    r.task.source_latent.shape()
                ))
                .into());
            }
            let schedule = make_schedule(cfg.schedule, cfg.steps).map_err(config_err)?;
            Backend::Analytic(PointTargetOracle::new(schedule, target))
        }
        DenoiserSpec::Remote(_) => Backend::Remote(r.remote.take().expect("remote connected in resolve")),
    })
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j);
    }
    Ok(builder.build().context("starting worker pool")?.install(f))
}

/// JSON number, or a string for non-finite values.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(fmt_float(v))
    }
}

fn run_summary(out: &RunOutput, r: &Resolved) -> Result<Value> {
    let t = &out.trace;
    let chosen = t.chosen();
    let mut v = json!({
        "method": t.method.as_str(),
        "chosen_id": t.chosen_id,
        "seed": chosen.map(|c| c.seed),
        "prompt": chosen.map(|c| c.prompt.clone()),
        "stop_step": t.stop_step,
        "nfe": t.nfe,
        "model_calls": t.model_calls,
        "selection_scores": t.selection_scores.iter().map(|&s| num(s)).collect::<Vec<_>>(),
    });
    if let Some(mask) = &r.task.gt_mask {
        let m = elect_core::metrics::background_metrics(&out.final_latent, &r.task.source_latent, mask)?;
        v["metrics"] = json!({"bg_mse": num(m.bg_mse), "psnr": num(m.psnr), "ssim": num(m.ssim)});
    }
    if let (Some(b), Some(c)) = (&r.bench, chosen) {
        if c.prompt == b.instruction {
            v["gt_bg_mse"] = num(b.gt_bg_mse(c.seed));
        }
    }
    Ok(v)
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum EditKind {
    Elect,
    BestOfN,
    Trace,
}

fn cmd_edit(args: &EditArgs, kind: EditKind) -> Result<()> {
    let cfg = args.engine.config(args.n, args.seeds.clone())?;
    let mut r = resolve(&args.task, &cfg)?;
    let d = backend(&args.task, &mut r, &cfg, &cfg.candidate_seeds())?;
    let dump_maps = args.dump_maps || kind == EditKind::Trace;
    let mut maps = MapDump::default();
    let started = Instant::now();
    let mut out = with_pool(args.engine.jobs, || {
        let observer: &mut dyn RunObserver = if dump_maps { &mut maps } else { &mut NoObserver };
        match kind {
            EditKind::BestOfN => best_of_n(&r.task, &d, &cfg),
            _ => elect_run_observed(&r.task, &d, &cfg, observer),
        }
    })??;
    if args.timing {
        out.trace.wall_clock_ms = Some(started.elapsed().as_secs_f64() * 1e3);
    }
    create_out(&args.out)?;
    let edited = args.out.join("edited.elct");
    write_elct(&edited, &out.final_latent)?;
    let mut summary = run_summary(&out, &r)?;
    summary["output"] = json!(edited.display().to_string());
    if args.trace || kind == EditKind::Trace {
        let path = args.out.join("trace.json");
        write_trace(
            &path,
            &TraceFile {
                denoiser: &r.label,
                config: &cfg,
                trace: &out.trace,
            },
        )?;
        summary["trace"] = json!(path.display().to_string());
    }
    if kind == EditKind::Trace {
        let path = args.out.join("step_scores.csv");
        write_step_scores(&path, &out)?;
        summary["step_scores"] = json!(path.display().to_string());
    }
    if dump_maps {
        let dir = args.out.join("maps");
        maps.write(&dir)?;
        write_elct(&dir.join("mean_map.elct"), &out.mean_map)?;
        summary["maps"] = json!(dir.display().to_string());
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

/// One row per step and candidate while every candidate is alive.
fn write_step_scores(path: &Path, out: &RunOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["t", "candidate_id", "seed", "score", "best"])?;
    for rec in &out.trace.step_scores {
        for (id, s) in rec.scores.iter().enumerate() {
            let seed = out.trace.candidates.get(id).map_or(0, |c| c.seed);
            w.write_record([
                rec.t.to_string(),
                id.to_string(),
                seed.to_string(),
                fmt_float(*s),
                fmt_float(rec.best),
            ])?;
        }
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    if args.tasks == 0 {
        return Err(ConfigError::new("--tasks must be at least 1").into());
    }
    let max_n = args.n.iter().copied().max().unwrap_or(1);
    let cfg = args.engine.config(max_n, None)?;
    let grid = ExperimentGrid {
        methods: args.methods.clone(),
        ns: args.n.clone(),
    };
    grid.validate().map_err(config_err)?;
    let params = bench_params(args.sigma);
    let tasks = make_benchmark(args.bench_seed, args.tasks, &params).map_err(config_err)?;
    let summary = run_experiment(
        &tasks,
        args.bench_seed,
        &params,
        &grid,
        &cfg,
        args.engine.jobs,
        &args.out,
    )?;
    let out = json!({
        "results": args.out.join("results.csv").display().to_string(),
        "summary": args.out.join("summary.json").display().to_string(),
        "points": summary.points,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_prompt_edit(args: &PromptArgs) -> Result<()> {
    let e = &args.edit;
    let cfg = e.engine.config(e.n, e.seeds.clone())?;
    if args.n_prompts == 0 {
        return Err(ConfigError::new("--n-prompts must be at least 1").into());
    }
    let mut r = resolve(&e.task, &cfg)?;
    let judgment = if args.mock_judgment == "pass" {
        EditJudgment {
            if_score: 1.0,
            bc_score: 1.0,
        }
    } else {
        EditJudgment {
            if_score: 0.0,
            bc_score: 1.0,
        }
    };
    let client: Box<dyn MllmClient + Send> = match &args.mllm {
        MllmSpec::Mock => Box::new(MockMllm::new(args.mock_seed, judgment)),
        MllmSpec::Http(url) => Box::new(
            HttpMllm::new(url.clone(), RemoteConfig::new(url.clone()).map_err(config_err)?.timeout)
                .with_templates(args.evaluate_template.as_deref(), args.variants_template.as_deref())
                .context("reading template override")?,
        ),
    };
    let seeds = cfg.candidate_seeds();
    let mut noise_seed = args.noise_seed;
    let d = if let DenoiserSpec::Synthetic = e.task.denoiser {
        // The synthetic oracle must know every variant before the run starts.
        if args.mllm != MllmSpec::Mock {
            return Err(ConfigError::new("the synthetic denoiser supports only --mllm mock").into());
        }
        let b = r.bench.clone().expect("synthetic tasks come from the benchmark");
        let ns = match noise_seed {
            Some(s) => s,
            None => {
                let probe = b.oracle(&cfg, &seeds).map_err(config_err)?;
                let run = with_pool(e.engine.jobs, || elect_core::engine::elect_run(&r.task, &probe, &cfg))??;
                run.trace.chosen().map_or(1, |c| c.seed)
            }
        };
        noise_seed = Some(ns);
        let variants = MockMllm::new(args.mock_seed, judgment).variant_list(&r.task.instruction, args.n_prompts);
        Backend::Synthetic(
            b.pipeline_oracle(&cfg, &seeds, ns, &variants, None)
                .map_err(config_err)?,
        )
    } else {
        backend(&e.task, &mut r, &cfg, &seeds)?
    };
    let opts = PromptOptions {
        n_prompts: args.n_prompts,
        force: args.force,
        noise_seed,
    };
    let (task, dref, cref, oref) = (&r.task, &d, &cfg, &opts);
    let outcome = with_pool(e.engine.jobs, move || {
        elect_prompt_run(task, dref, client.as_ref(), cref, oref)
    })??;
    create_out(&e.out)?;
    let edited = e.out.join("edited.elct");
    write_elct(&edited, &outcome.final_run().final_latent)?;
    let mut summary = json!({
        "judgment": outcome.judgment,
        "prompt_selection": outcome.prompt_run.is_some(),
        "variants": outcome.variants,
        "seed_run": run_summary(&outcome.seed_run, &r)?,
        "output": edited.display().to_string(),
    });
    if let Some(p) = &outcome.prompt_run {
        summary["prompt_run"] = run_summary(p, &r)?;
    }
    if e.trace {
        let path = e.out.join("trace.json");
        write_trace(
            &path,
            &TraceFile {
                denoiser: &r.label,
                config: &cfg,
                trace: &outcome.seed_run.trace,
            },
        )?;
        if let Some(p) = &outcome.prompt_run {
            write_trace(
                &e.out.join("prompt_trace.json"),
                &TraceFile {
                    denoiser: &r.label,
                    config: &cfg,
                    trace: &p.trace,
                },
            )?;
        }
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Edit(a) => cmd_edit(a, EditKind::Elect),
        Command::Bestofn(a) => cmd_edit(a, EditKind::BestOfN),
        Command::Trace(a) => cmd_edit(a, EditKind::Trace),
        Command::Bench(a) => cmd_bench(a),
        Command::PromptEdit(a) => cmd_prompt_edit(a),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            crate::exit_code(&err)
        }
    }
}
