//! Synthetic editing benchmark with closed-form background error.
//!
//! Each task has a smooth random source latent, a rectangular foreground
//! patch and a fixed additive edit pattern inside it. Candidate `i` (a seed
//! or a prompt) lands on `edited + delta_i * field`, where `field` is a smooth
//! background-only perturbation with unit mean square over the background.
//! The ground-truth background MSE of candidate `i` is `delta_i^2 * energy`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::engine::{best_of_n, elect_run, vanilla_run, EditTask, EngineConfig, Method, RunError, RunOutput};
use crate::error::invalid;
use crate::metrics::{background_metrics, BackgroundMetrics};
use crate::oracle::{OracleCandidate, SyntheticEditOracle};
use crate::rng::{derive_seed, seed_noise, SeededRng};
use crate::schedule::make_schedule;
use crate::{Result, Tensor};

const TAG_TASK: u64 = 0x7461_736b;
const TAG_DELTA: u64 = 0x6465_6c74;
const TAG_PROMPT: u64 = 0x7072_6f6d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DeltaDist {
    /// Every candidate lands exactly on the edit.
    Zero,
    /// `values[k]` for the `k`-th candidate (seed `k + 1`), cycling.
    Fixed { values: Vec<f64> },
    /// `|N(0, sigma^2)|`.
    FoldedNormal { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchParams {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Inclusive range of the square patch side.
    pub patch_min: usize,
    pub patch_max: usize,
    pub delta: DeltaDist,
    pub edit_amplitude: f64,
    /// Relative per-candidate variation of the edit amplitude.
    pub edit_jitter: f64,
    /// Sinusoid components per channel in the source and field.
    pub components: usize,
    /// Highest spatial frequency, in cycles per image side.
    pub max_frequency: f64,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            channels: 4,
            height: 16,
            width: 16,
            patch_min: 6,
            patch_max: 9,
            delta: DeltaDist::FoldedNormal { sigma: 0.1 },
            edit_amplitude: 1.0,
            edit_jitter: 0.0,
            components: 3,
            max_frequency: 2.0,
        }
    }
}

impl BenchParams {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height < 2 || self.width < 2 {
            return Err(invalid!(
                "latent must be at least 1x2x2, got {}x{}x{}",
                self.channels,
                self.height,
                self.width
            ));
        }
        if self.patch_min == 0 || self.patch_min > self.patch_max {
            return Err(invalid!("invalid patch range {}..={}", self.patch_min, self.patch_max));
        }
        if self.patch_max >= self.height.min(self.width) {
            return Err(invalid!("patch side {} leaves no background", self.patch_max));
        }
        if self.components == 0 || self.max_frequency.is_nan() || self.max_frequency <= 0.0 {
            return Err(invalid!("field needs at least one component and a positive frequency"));
        }
        if self.edit_amplitude.is_nan() || self.edit_amplitude <= 0.0 || !(0.0..1.0).contains(&self.edit_jitter) {
            return Err(invalid!("edit amplitude must be positive and jitter in [0, 1)"));
        }
        match &self.delta {
            DeltaDist::Fixed { values } if values.is_empty() || values.iter().any(|v| v.is_nan() || *v < 0.0) => {
                Err(invalid!("fixed deltas must be a nonempty list of nonnegative values"))
            }
            DeltaDist::FoldedNormal { sigma } if sigma.is_nan() || *sigma < 0.0 => {
                Err(invalid!("sigma must be nonnegative"))
            }
            _ => Ok(()),
        }
    }

    fn shape(&self) -> [usize; 4] {
        [1, self.channels, self.height, self.width]
    }
}

/// Sum of random sinusoids per channel, scaled to unit mean square.
fn smooth_field(rng: &mut SeededRng, p: &BenchParams) -> Vec<f64> {
    let (h, w) = (p.height, p.width);
    let mut out = alloc::vec![0.0f64; p.channels * h * w];
    for ch in 0..p.channels {
        let comps: Vec<(f64, f64, f64, f64)> = (0..p.components)
            .map(|_| {
                (
                    rng.uniform(-p.max_frequency, p.max_frequency),
                    rng.uniform(-p.max_frequency, p.max_frequency),
                    rng.uniform(0.0, core::f64::consts::TAU),
                    rng.uniform(0.5, 1.0),
                )
            })
            .collect();
        for r in 0..h {
            for c in 0..w {
                let (y, x) = (r as f64 / h as f64, c as f64 / w as f64);
                out[ch * h * w + r * w + c] = comps
                    .iter()
                    .map(|&(fy, fx, ph, a)| a * libm::sin(core::f64::consts::TAU * (fy * y + fx * x) + ph))
                    .sum();
            }
        }
    }
    let ms = out.iter().map(|v| v * v).sum::<f64>() / out.len() as f64;
    let s = if ms > 0.0 { 1.0 / libm::sqrt(ms) } else { 0.0 };
    out.iter_mut().for_each(|v| *v *= s);
    out
}

#[derive(Debug, Clone)]
pub struct BenchTask {
    pub id: usize,
    pub task_seed: u64,
    pub instruction: String,
    pub source: Tensor,
    /// Binary `[H, W]`, 1 on the edited patch.
    pub mask: Tensor,
    /// Source with the edit pattern applied, before candidate variation.
    pub edited: Tensor,
    /// Edit pattern `edited - source`, zero on the background.
    pub pattern: Tensor,
    /// Background perturbation, zero on the foreground.
    pub field: Tensor,
    /// Mean square of `field` over background elements.
    pub energy: f64,
    params: BenchParams,
}

impl BenchTask {
    fn generate(id: usize, task_seed: u64, p: &BenchParams) -> Result<Self> {
        let mut rng = SeededRng::new(task_seed);
        let shape = p.shape();
        let (h, w) = (p.height, p.width);
        let hw = h * w;

        let side = p.patch_min + (rng.next_u64() % (p.patch_max - p.patch_min + 1) as u64) as usize;
        let top = (rng.next_u64() % (h - side + 1) as u64) as usize;
        let left = (rng.next_u64() % (w - side + 1) as u64) as usize;
        let inside = |k: usize| {
            let (r, c) = ((k % hw) / w, k % w);
            (top..top + side).contains(&r) && (left..left + side).contains(&c)
        };
        let mask = Tensor::from_fn(&[h, w], |k| if inside(k) { 1.0 } else { 0.0 })?;

        let source = smooth_field(&mut rng, p);
        let signs: Vec<f64> = (0..p.channels)
            .map(|_| if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 })
            .collect();
        let pattern: Vec<f64> = (0..source.len())
            .map(|k| {
                if !inside(k) {
                    return 0.0;
                }
                let (r, c) = ((k % hw) / w - top, k % w - left);
                let ripple = libm::cos(core::f64::consts::PI * (r + c) as f64 / side as f64);
                signs[k / hw] * p.edit_amplitude * (0.75 + 0.25 * ripple)
            })
            .collect();
        let mut field = smooth_field(&mut rng, p);
        for (k, v) in field.iter_mut().enumerate() {
            if inside(k) {
                *v = 0.0;
            }
        }
        let bg_elems = (hw - side * side) * p.channels;
        let ms = field.iter().map(|v| v * v).sum::<f64>() / bg_elems as f64;
        let scale = 1.0 / libm::sqrt(ms);

        let to_tensor = |v: Vec<f32>| Tensor::new(shape.to_vec(), v);
        let source_t = to_tensor(source.iter().map(|&v| v as f32).collect())?;
        let pattern_t = to_tensor(pattern.iter().map(|&v| v as f32).collect())?;
        let edited = source_t.add(&pattern_t)?;
        let field_t = to_tensor(field.iter().map(|&v| (v * scale) as f32).collect())?;
        let energy = field_t.data().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / bg_elems as f64;

        Ok(Self {
            id,
            task_seed,
            instruction: format!("apply edit {id}"),
            source: source_t,
            mask,
            edited,
            pattern: pattern_t,
            field: field_t,
            energy,
            params: p.clone(),
        })
    }

    pub fn edit_task(&self) -> EditTask {
        EditTask {
            source_latent: self.source.clone(),
            instruction: self.instruction.clone(),
            gt_mask: Some(self.mask.clone()),
        }
    }

    /// Background deviation and edit gain of the candidate with `tag`.
    fn draw(&self, tag: u64, ordinal: usize) -> (f64, f64) {
        let mut rng = SeededRng::new(derive_seed(self.task_seed, tag));
        let delta = match &self.params.delta {
            DeltaDist::Zero => 0.0,
            DeltaDist::Fixed { values } => values[ordinal % values.len()],
            DeltaDist::FoldedNormal { sigma } => sigma * libm::fabs(rng.normal_pair().0),
        };
        let gain = 1.0 + self.params.edit_jitter * rng.uniform(-1.0, 1.0);
        (delta, gain)
    }

    fn seed_draw(&self, seed: u64) -> (f64, f64) {
        self.draw(derive_seed(TAG_DELTA, seed), seed.saturating_sub(1) as usize)
    }

    /// Background deviation of seed `seed`. Seeds are numbered from 1, and
    /// fixed delta lists are indexed by `seed - 1`.
    pub fn delta(&self, seed: u64) -> f64 {
        self.seed_draw(seed).0
    }

    /// Deviation of the `index`-th prompt variant.
    pub fn prompt_delta(&self, index: usize) -> f64 {
        self.draw(derive_seed(TAG_PROMPT, index as u64), index).0
    }

    fn target_with(&self, delta: f64, gain: f64) -> Result<Tensor> {
        let varied = self.source.axpby(1.0, &self.pattern, gain)?;
        varied.axpby(1.0, &self.field, delta)
    }

    /// Clean latent that seed `seed` lands on.
    pub fn target(&self, seed: u64) -> Result<Tensor> {
        let (d, g) = self.seed_draw(seed);
        self.target_with(d, g)
    }

    pub fn gt_bg_mse(&self, seed: u64) -> f64 {
        let d = self.delta(seed);
        d * d * self.energy
    }

    /// Seed in `seeds` with the smallest ground-truth error, lowest index on
    /// ties.
    pub fn gt_best(&self, seeds: &[u64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &s) in seeds.iter().enumerate() {
            let e = self.gt_bg_mse(s);
            if best.is_none_or(|(_, b)| e < b) {
                best = Some((i, e));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Oracle denoiser over the given seeds for any schedule.
    pub fn oracle(&self, cfg: &EngineConfig, seeds: &[u64]) -> Result<SyntheticEditOracle> {
        let schedule = make_schedule(cfg.schedule, cfg.steps)?;
        let candidates = seeds
            .iter()
            .map(|&s| {
                Ok(OracleCandidate {
                    noise: seed_noise(s, self.source.shape())?,
                    prompt: None,
                    target: self.target(s)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SyntheticEditOracle::new(schedule, self.source.clone(), &cfg.guidance, candidates)
    }

    /// Oracle for prompt selection: every variant starts from the noise of
    /// `noise_seed`, and variant `k` deviates by `deltas[k]` (or its drawn
    /// prompt deviation when `deltas` is `None`).
    pub fn prompt_oracle(
        &self,
        cfg: &EngineConfig,
        noise_seed: u64,
        variants: &[String],
        deltas: Option<&[f64]>,
    ) -> Result<SyntheticEditOracle> {
        if let Some(d) = deltas {
            if d.len() != variants.len() {
                return Err(invalid!("{} deltas for {} variants", d.len(), variants.len()));
            }
        }
        let schedule = make_schedule(cfg.schedule, cfg.steps)?;
        let noise = seed_noise(noise_seed, self.source.shape())?;
        let candidates = variants
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let delta = deltas.map_or_else(|| self.prompt_delta(k), |d| d[k]);
                Ok(OracleCandidate {
                    noise: noise.clone(),
                    prompt: Some(v.clone()),
                    target: self.target_with(delta, 1.0)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SyntheticEditOracle::new(schedule, self.source.clone(), &cfg.guidance, candidates)
    }

    /// Oracle for the full seed-then-prompt pipeline. Seeds answer to the
    /// task instruction; variants that differ from it start from the noise of
    /// `noise_seed`. A variant equal to the instruction is the seed
    /// trajectory of `noise_seed` itself, so its deviation is
    /// `delta(noise_seed)` regardless of `deltas`.
    pub fn pipeline_oracle(
        &self,
        cfg: &EngineConfig,
        seeds: &[u64],
        noise_seed: u64,
        variants: &[String],
        deltas: Option<&[f64]>,
    ) -> Result<SyntheticEditOracle> {
        let mut all_seeds = seeds.to_vec();
        if !all_seeds.contains(&noise_seed) {
            all_seeds.push(noise_seed);
        }
        let seed_oracle = self.oracle(cfg, &all_seeds)?;
        let prompt_oracle = self.prompt_oracle(cfg, noise_seed, variants, deltas)?;
        let mut candidates: Vec<OracleCandidate> = seed_oracle
            .candidates()
            .iter()
            .cloned()
            .map(|c| OracleCandidate {
                prompt: Some(self.instruction.clone()),
                ..c
            })
            .collect();
        candidates.extend(
            prompt_oracle
                .candidates()
                .iter()
                .filter(|c| c.prompt.as_deref() != Some(self.instruction.as_str()))
                .cloned(),
        );
        let schedule = make_schedule(cfg.schedule, cfg.steps)?;
        SyntheticEditOracle::new(schedule, self.source.clone(), &cfg.guidance, candidates)
    }

    /// Ground-truth background MSE of variant `k` under [`Self::pipeline_oracle`].
    pub fn variant_bg_mse(&self, noise_seed: u64, variants: &[String], deltas: Option<&[f64]>, k: usize) -> f64 {
        let d = if variants[k] == self.instruction {
            self.delta(noise_seed)
        } else {
            deltas.map_or_else(|| self.prompt_delta(k), |d| d[k])
        };
        d * d * self.energy
    }

    pub fn metrics(&self, edited: &Tensor) -> Result<BackgroundMetrics> {
        background_metrics(edited, &self.source, &self.mask)
    }
}

/// `n_tasks` tasks derived from `rng_seed`.
pub fn make_benchmark(rng_seed: u64, n_tasks: usize, params: &BenchParams) -> Result<Vec<BenchTask>> {
    if n_tasks == 0 {
        return Err(invalid!("at least one task is required"));
    }
    params.validate()?;
    (0..n_tasks)
        .map(|id| BenchTask::generate(id, derive_seed(derive_seed(rng_seed, TAG_TASK), id as u64), params))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub task: usize,
    pub method: Method,
    pub n: usize,
    pub candidate_id: usize,
    pub seed: u64,
    pub stop_step: usize,
    pub nfe: u64,
    #[serde(flatten)]
    pub metrics: BackgroundMetrics,
    /// Analytic background MSE of the chosen seed.
    pub gt_bg_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub methods: Vec<Method>,
    pub ns: Vec<usize>,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            methods: alloc::vec![Method::Vanilla, Method::BestOfN, Method::Elect, Method::ElectAdaptive],
            ns: alloc::vec![1, 3, 5, 10],
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.ns.is_empty() || self.ns.contains(&0) {
            return Err(invalid!("grid needs methods and positive candidate counts"));
        }
        if self.methods.contains(&Method::ElectPrompt) {
            return Err(invalid!("prompt selection is not part of the seed grid"));
        }
        Ok(())
    }
}

fn row(task: &BenchTask, n: usize, seeds: &[u64], out: &RunOutput) -> Result<MetricsRow> {
    let id = out.trace.chosen_id.unwrap_or(0);
    let seed = seeds[id];
    Ok(MetricsRow {
        task: task.id,
        method: out.trace.method,
        n,
        candidate_id: id,
        seed,
        stop_step: out.trace.stop_step.unwrap_or(0),
        nfe: out.trace.nfe,
        metrics: task.metrics(&out.final_latent)?,
        gt_bg_mse: task.gt_bg_mse(seed),
    })
}

/// Every method and candidate count of `grid` on one task, in grid order.
/// Vanilla is run once, with seed 1.
pub fn evaluate_task(
    task: &BenchTask,
    grid: &ExperimentGrid,
    base: &EngineConfig,
) -> Result<Vec<MetricsRow>, RunError> {
    grid.validate()?;
    let max_n = grid.ns.iter().copied().max().unwrap_or(1);
    let all_seeds: Vec<u64> = (1..=max_n as u64).collect();
    let oracle = task.oracle(base, &all_seeds)?;
    let edit = task.edit_task();
    let mut rows = Vec::new();
    for &method in &grid.methods {
        if method == Method::Vanilla {
            let out = vanilla_run(&edit, &oracle, base, 1)?;
            rows.push(row(task, 1, &[1], &out)?);
            continue;
        }
        for &n in &grid.ns {
            let seeds = &all_seeds[..n];
            let cfg = EngineConfig {
                n_candidates: n,
                seeds: Some(seeds.to_vec()),
                adaptive: method == Method::ElectAdaptive,
                ..base.clone()
            };
            let out = run_method(method, &edit, &oracle, &cfg)?;
            rows.push(row(task, n, seeds, &out)?);
        }
    }
    Ok(rows)
}

fn run_method<D: Denoiser + ?Sized>(
    method: Method,
    edit: &EditTask,
    d: &D,
    cfg: &EngineConfig,
) -> Result<RunOutput, RunError> {
    match method {
        Method::BestOfN => best_of_n(edit, d, cfg),
        Method::Elect | Method::ElectAdaptive => elect_run(edit, d, cfg),
        Method::Vanilla => vanilla_run(edit, d, cfg, cfg.candidate_seeds()[0]),
        Method::ElectPrompt => Err(invalid!("prompt selection needs an MLLM").into()),
    }
}
