//! Early-stopped candidate selection, the full-inference Best-of-N baseline,
//! adaptive stopping, and step accounting.
//!
//! All candidates advance together from `T` down to the stopping step. At
//! every executed step the engine records each candidate's background
//! inconsistency score from the Tweedie projection of its current latent. At
//! the stopping step the lowest score wins and only the winner is denoised
//! further. One denoising step of one candidate counts as one function
//! evaluation (NFE); raw model calls are counted separately.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ddc::{ddc_stop, smoothed_deltas, DdcConfig};
use crate::denoiser::{guided_predict, Denoiser, GuidanceConfig, GuidedPrediction};
use crate::error::invalid;
use crate::oracle::mode_for;
use crate::relevance::{relevance_map, soft_background_weight, RelevanceAccumulator, StepWindow};
use crate::rng::seed_noise;
use crate::schedule::{make_schedule, NoiseSchedule, ScheduleKind};
use crate::scoring::{bis_score, fg_score, hybrid_select, rank_candidates, BisReport};
use crate::{Error, Result, Tensor};

/// Source image latent and instruction of one edit.
#[derive(Debug, Clone)]
pub struct EditTask {
    /// Encoded source image; also the image condition of the denoiser.
    pub source_latent: Tensor,
    pub instruction: String,
    /// Ground-truth foreground mask `[H, W]`, used for evaluation only.
    pub gt_mask: Option<Tensor>,
}

/// Which prediction feeds the Tweedie projection used for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TweedieSource {
    /// The guided estimate that also drives the trajectory.
    #[default]
    Guided,
    /// The raw conditional estimate.
    Conditional,
}

/// How relevance maps are averaged into the background weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelevancePooling {
    /// One mean map over all candidates.
    #[default]
    Pooled,
    /// Each candidate is weighted by its own time-averaged map.
    PerCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub n_candidates: usize,
    /// Explicit candidate seeds; defaults to `1..=n_candidates`.
    pub seeds: Option<Vec<u64>>,
    pub t_stop: usize,
    pub steps: usize,
    pub schedule: ScheduleKind,
    pub adaptive: bool,
    pub ddc: DdcConfig,
    /// Minimum executed steps before an adaptive stop.
    pub ddc_floor: usize,
    /// Number of leading steps whose relevance maps are averaged.
    pub relevance_window: usize,
    pub guidance: GuidanceConfig,
    pub hybrid_fg: bool,
    pub tweedie_source: TweedieSource,
    pub relevance_pooling: RelevancePooling,
    /// Step candidates on the rayon pool when the `parallel` feature is on
    /// and the denoiser allows concurrent calls.
    pub parallel: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n_candidates: 10,
            seeds: None,
            t_stop: 60,
            steps: 100,
            schedule: ScheduleKind::Ddim,
            adaptive: false,
            ddc: DdcConfig::default(),
            ddc_floor: 20,
            relevance_window: 20,
            guidance: GuidanceConfig::default(),
            hybrid_fg: false,
            tweedie_source: TweedieSource::Guided,
            relevance_pooling: RelevancePooling::Pooled,
            parallel: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_candidates == 0 {
            return Err(invalid!("at least one candidate is required"));
        }
        if self.steps < 2 {
            return Err(invalid!("at least two steps are required"));
        }
        if self.t_stop >= self.steps {
            return Err(invalid!(
                "t_stop {} must be below the step count {}",
                self.t_stop,
                self.steps
            ));
        }
        if let Some(seeds) = &self.seeds {
            if seeds.len() != self.n_candidates {
                return Err(invalid!(
                    "{} seeds given for {} candidates",
                    seeds.len(),
                    self.n_candidates
                ));
            }
        }
        if self.relevance_window == 0 {
            return Err(invalid!("relevance window must cover at least one step"));
        }
        if self.adaptive {
            self.ddc.validate()?;
        }
        self.guidance.validate()
    }

    pub fn candidate_seeds(&self) -> Vec<u64> {
        self.seeds
            .clone()
            .unwrap_or_else(|| (1..=self.n_candidates as u64).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vanilla,
    BestOfN,
    Elect,
    ElectAdaptive,
    ElectPrompt,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::BestOfN => "best_of_n",
            Method::Elect => "elect",
            Method::ElectAdaptive => "elect_adaptive",
            Method::ElectPrompt => "elect_prompt",
        }
    }
}

/// When candidates are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopPlan {
    /// Score at a fixed step label.
    At(usize),
    /// Score when the diminishing-delta criterion fires.
    Adaptive,
    /// Run every candidate to completion, then score the clean latents.
    Full,
}

/// Seed, instruction and starting latent of one candidate trajectory.
#[derive(Debug, Clone)]
pub struct CandidateSpec {
    pub seed: u64,
    pub prompt: String,
    pub initial: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateInfo {
    pub id: usize,
    pub seed: u64,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// Score of every candidate at this step, by candidate id.
    pub scores: Vec<f64>,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub method: Method,
    pub steps: usize,
    pub candidates: Vec<CandidateInfo>,
    /// Per-step scores while every candidate is alive.
    pub step_scores: Vec<StepRecord>,
    /// Smoothed best-score deltas, one per step after the first.
    pub smoothed_deltas: Vec<f64>,
    /// Scores the selection was made on.
    pub selection_scores: Vec<f64>,
    pub fg_scores: Option<Vec<f64>>,
    pub chosen_id: Option<usize>,
    /// Step label at which candidates were compared (0 for full inference).
    pub stop_step: Option<usize>,
    pub nfe: u64,
    pub model_calls: u64,
    /// Filled in by callers that own a clock.
    pub wall_clock_ms: Option<f64>,
}

impl SelectionTrace {
    fn new(method: Method, steps: usize, candidates: Vec<CandidateInfo>) -> Self {
        Self {
            method,
            steps,
            candidates,
            step_scores: Vec::new(),
            smoothed_deltas: Vec::new(),
            selection_scores: Vec::new(),
            fg_scores: None,
            chosen_id: None,
            stop_step: None,
            nfe: 0,
            model_calls: 0,
            wall_clock_ms: None,
        }
    }

    pub fn chosen(&self) -> Option<&CandidateInfo> {
        self.chosen_id.and_then(|id| self.candidates.get(id))
    }
}

/// `(nfe, model_calls)` of a finished run.
pub fn nfe_count(trace: &SelectionTrace) -> (u64, u64) {
    (trace.nfe, trace.model_calls)
}

/// NFE of an early-stopped run: every candidate runs `steps - stop`, the
/// winner runs the remaining `stop`.
pub fn expected_nfe(n: usize, steps: usize, stop: usize) -> u64 {
    (n * (steps - stop) + stop) as u64
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Final latent of the winner (the identity decoder is used at this scale).
    pub final_latent: Tensor,
    pub trace: SelectionTrace,
    /// Pooled mean relevance map used for the selection.
    pub mean_map: Tensor,
}

/// A failed run with whatever trace was recorded before the failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error}")]
pub struct RunError {
    #[source]
    pub error: Error,
    pub partial_trace: Option<Box<SelectionTrace>>,
}

impl From<Error> for RunError {
    fn from(error: Error) -> Self {
        Self {
            error,
            partial_trace: None,
        }
    }
}

/// Hooks for debug dumps.
pub trait RunObserver {
    fn relevance_map(&mut self, _candidate: &CandidateInfo, _t: usize, _map: &Tensor) {}
    fn selection(&mut self, _t: usize, _mean_map: &Tensor, _weight: &Tensor) {}
}

pub struct NoObserver;

impl RunObserver for NoObserver {}

fn check_compat<D: Denoiser + ?Sized>(denoiser: &D, schedule: &NoiseSchedule, task: &EditTask) -> Result<()> {
    let mode = denoiser.capabilities().mode;
    if mode != mode_for(schedule.kind()) {
        return Err(invalid!(
            "denoiser predicts {mode:?} but the schedule is {:?}",
            schedule.kind()
        ));
    }
    task.source_latent.channels_hw()?;
    Ok(())
}

fn predict_all<D: Denoiser + ?Sized>(
    denoiser: &D,
    cfg: &EngineConfig,
    task: &EditTask,
    ids: &[usize],
    latents: &[Tensor],
    prompts: &[String],
    t: usize,
) -> Result<Vec<GuidedPrediction>> {
    let one = |&i: &usize| {
        guided_predict(
            denoiser,
            &latents[i],
            t,
            &task.source_latent,
            &prompts[i],
            &cfg.guidance,
        )
    };
    #[cfg(feature = "parallel")]
    if cfg.parallel && ids.len() > 1 && denoiser.capabilities().concurrency == crate::denoiser::Concurrency::Concurrent
    {
        use rayon::prelude::*;
        return ids.par_iter().map(one).collect();
    }
    ids.iter().map(one).collect()
}

struct Selection {
    winner: usize,
    scores: Vec<f64>,
    fg: Option<Vec<f64>>,
}

fn select(
    cfg: &EngineConfig,
    task: &EditTask,
    acc: &RelevanceAccumulator,
    clean: &[Tensor],
    t: usize,
) -> Result<Selection> {
    let n = clean.len();
    let pooled = acc.mean_map()?;
    let maps: Vec<Tensor> = match cfg.relevance_pooling {
        RelevancePooling::Pooled => alloc::vec![pooled; n],
        RelevancePooling::PerCandidate => (0..n).map(|i| acc.candidate_mean_map(i)).collect::<Result<_>>()?,
    };
    let reports = clean
        .iter()
        .zip(&maps)
        .enumerate()
        .map(|(i, (z0, m))| {
            let w = soft_background_weight(m)?;
            let r = bis_score(z0, &task.source_latent, &w)?;
            Ok(BisReport {
                candidate_id: i,
                t,
                score: r.score,
                map: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let order = rank_candidates(&reports)?;
    let scores = reports.iter().map(|r| r.score).collect();
    if !cfg.hybrid_fg {
        return Ok(Selection {
            winner: order[0],
            scores,
            fg: None,
        });
    }
    let fg = clean
        .iter()
        .zip(&maps)
        .map(|(z0, m)| fg_score(z0, &task.source_latent, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(Selection {
        winner: hybrid_select(&order, &fg)?,
        scores,
        fg: Some(fg),
    })
}

/// Runs a candidate pool under `plan`. This is the shared core of every
/// public entry point.
pub fn run_selection<D: Denoiser + ?Sized>(
    task: &EditTask,
    denoiser: &D,
    cfg: &EngineConfig,
    method: Method,
    candidates: Vec<CandidateSpec>,
    plan: StopPlan,
    observer: &mut dyn RunObserver,
) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    if candidates.is_empty() {
        return Err(invalid!("empty candidate pool").into());
    }
    let schedule = make_schedule(cfg.schedule, cfg.steps)?;
    check_compat(denoiser, &schedule, task)?;
    for c in &candidates {
        c.initial.ensure_same_shape(&task.source_latent, "initial latent")?;
    }
    if let StopPlan::At(t) = plan {
        if t == 0 || t >= cfg.steps {
            return Err(invalid!("stop step {t} must lie in 1..{}", cfg.steps).into());
        }
    }

    let n = candidates.len();
    let infos: Vec<CandidateInfo> = candidates
        .iter()
        .enumerate()
        .map(|(id, c)| CandidateInfo {
            id,
            seed: c.seed,
            prompt: c.prompt.clone(),
        })
        .collect();
    let prompts: Vec<String> = candidates.iter().map(|c| c.prompt.clone()).collect();
    let mut latents: Vec<Tensor> = candidates.into_iter().map(|c| c.initial).collect();
    let mut trace = SelectionTrace::new(method, cfg.steps, infos);
    let all: Vec<usize> = (0..n).collect();
    let mut acc = RelevanceAccumulator::new(n, StepWindow::leading(cfg.steps, cfg.relevance_window));
    let mut best_scores: Vec<f64> = Vec::new();
    let mut winner: Option<usize> = None;

    let fail = |error: Error, trace: &SelectionTrace| RunError {
        error,
        partial_trace: Some(Box::new(trace.clone())),
    };

    for t in (1..=cfg.steps).rev() {
        let ids: Vec<usize> = match winner {
            Some(w) => alloc::vec![w],
            None => all.clone(),
        };
        let preds = predict_all(denoiser, cfg, task, &ids, &latents, &prompts, t).map_err(|e| fail(e, &trace))?;
        trace.model_calls += preds.iter().map(|p| p.model_calls as u64).sum::<u64>();

        if winner.is_none() {
            let step = (|| -> Result<Option<Selection>> {
                if acc.window().contains(t) {
                    for (&i, p) in ids.iter().zip(&preds) {
                        let map = relevance_map(&p.cond, &p.img_uncond)?;
                        observer.relevance_map(&trace.candidates[i], t, &map);
                        acc.accumulate(i, &map, t)?;
                    }
                }
                let clean = ids
                    .iter()
                    .zip(&preds)
                    .map(|(&i, p)| {
                        let pred = match cfg.tweedie_source {
                            TweedieSource::Guided => &p.guided,
                            TweedieSource::Conditional => &p.cond,
                        };
                        schedule.tweedie(&latents[i], pred, t)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let sel = select(cfg, task, &acc, &clean, t)?;
                let best = sel.scores.iter().copied().fold(f64::INFINITY, f64::min);
                trace.step_scores.push(StepRecord {
                    t,
                    scores: sel.scores.clone(),
                    best,
                });
                best_scores.push(best);
                let executed = cfg.steps - t;
                let stop = match plan {
                    StopPlan::At(ts) => t == ts,
                    StopPlan::Adaptive => t == 1 || (executed >= cfg.ddc_floor && ddc_stop(&best_scores, &cfg.ddc)),
                    StopPlan::Full => false,
                };
                Ok(stop.then_some(sel))
            })()
            .map_err(|e| fail(e, &trace))?;

            if let Some(sel) = step {
                let mean = acc.mean_map().map_err(|e| fail(e, &trace))?;
                if let Ok(w) = soft_background_weight(&mean) {
                    observer.selection(t, &mean, &w);
                }
                winner = Some(sel.winner);
                trace.chosen_id = Some(sel.winner);
                trace.stop_step = Some(t);
                trace.selection_scores = sel.scores;
                trace.fg_scores = sel.fg;
            }
        }

        let stepping: Vec<(usize, &GuidedPrediction)> = match winner {
            Some(w) => ids.iter().copied().zip(&preds).filter(|(i, _)| *i == w).collect(),
            None => ids.iter().copied().zip(&preds).collect(),
        };
        for (i, p) in stepping {
            latents[i] = schedule
                .denoise_step(&latents[i], &p.guided, t)
                .map_err(|e| fail(e, &trace))?;
            trace.nfe += 1;
        }
    }
    trace.smoothed_deltas = smoothed_deltas(&best_scores, cfg.ddc.window);

    if winner.is_none() {
        let sel = select(cfg, task, &acc, &latents, 0).map_err(|e| fail(e, &trace))?;
        let mean = acc.mean_map().map_err(|e| fail(e, &trace))?;
        if let Ok(w) = soft_background_weight(&mean) {
            observer.selection(0, &mean, &w);
        }
        winner = Some(sel.winner);
        trace.chosen_id = Some(sel.winner);
        trace.stop_step = Some(0);
        trace.selection_scores = sel.scores;
        trace.fg_scores = sel.fg;
    }

    let mean_map = acc.mean_map().map_err(|e| fail(e, &trace))?;
    let w = winner.unwrap_or(0);
    Ok(RunOutput {
        final_latent: latents.swap_remove(w),
        trace,
        mean_map,
    })
}

fn seed_candidates(task: &EditTask, seeds: &[u64]) -> Result<Vec<CandidateSpec>> {
    seeds
        .iter()
        .map(|&seed| {
            Ok(CandidateSpec {
                seed,
                prompt: task.instruction.clone(),
                initial: seed_noise(seed, task.source_latent.shape())?,
            })
        })
        .collect()
}

/// Early-stopped seed selection: stops at `cfg.t_stop`, or adaptively when
/// `cfg.adaptive` is set.
pub fn elect_run<D: Denoiser + ?Sized>(
    task: &EditTask,
    denoiser: &D,
    cfg: &EngineConfig,
) -> Result<RunOutput, RunError> {
    elect_run_observed(task, denoiser, cfg, &mut NoObserver)
}

pub fn elect_run_observed<D: Denoiser + ?Sized>(
    task: &EditTask,
    denoiser: &D,
    cfg: &EngineConfig,
    observer: &mut dyn RunObserver,
) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let (method, plan) = if cfg.adaptive {
        (Method::ElectAdaptive, StopPlan::Adaptive)
    } else if cfg.t_stop == 0 {
        (Method::Elect, StopPlan::Full)
    } else {
        (Method::Elect, StopPlan::At(cfg.t_stop))
    };
    let pool = seed_candidates(task, &cfg.candidate_seeds())?;
    run_selection(task, denoiser, cfg, method, pool, plan, observer)
}

/// Best-of-N by background inconsistency after full inference.
pub fn best_of_n<D: Denoiser + ?Sized>(
    task: &EditTask,
    denoiser: &D,
    cfg: &EngineConfig,
) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let pool = seed_candidates(task, &cfg.candidate_seeds())?;
    run_selection(
        task,
        denoiser,
        cfg,
        Method::BestOfN,
        pool,
        StopPlan::Full,
        &mut NoObserver,
    )
}

/// Plain sampling of a single seed.
pub fn vanilla_run<D: Denoiser + ?Sized>(
    task: &EditTask,
    denoiser: &D,
    cfg: &EngineConfig,
    seed: u64,
) -> Result<RunOutput, RunError> {
    let single = EngineConfig {
        n_candidates: 1,
        seeds: Some(alloc::vec![seed]),
        adaptive: false,
        ..cfg.clone()
    };
    single.validate()?;
    let pool = seed_candidates(task, &[seed])?;
    run_selection(
        task,
        denoiser,
        &single,
        Method::Vanilla,
        pool,
        StopPlan::Full,
        &mut NoObserver,
    )
}
