//! Analytic denoisers with known clean targets, used for verification and the
//! synthetic benchmark.

use alloc::string::String;
use alloc::vec::Vec;

use crate::denoiser::{Capabilities, Concurrency, Denoiser, DenoiserRequest, GuidanceConfig, PredictionMode};
use crate::error::invalid;
use crate::schedule::{NoiseSchedule, ScheduleKind};
use crate::{Error, Result, Tensor};

pub fn mode_for(kind: ScheduleKind) -> PredictionMode {
    match kind {
        ScheduleKind::Ddim => PredictionMode::Eps,
        ScheduleKind::RectifiedFlow => PredictionMode::Velocity,
    }
}

/// The prediction whose Tweedie projection from `z_t` at step `t` is exactly
/// `target`.
pub fn prediction_towards(schedule: &NoiseSchedule, z_t: &Tensor, target: &Tensor, t: usize) -> Result<Tensor> {
    z_t.ensure_same_shape(target, "oracle target")?;
    match schedule.kind() {
        ScheduleKind::Ddim => {
            let ab = schedule.alpha_bar(t)?;
            let noise = libm::sqrt(1.0 - ab);
            if noise.is_nan() || noise <= 0.0 {
                return Err(Error::NumericDomain(alloc::format!("noise level is zero at step {t}")));
            }
            z_t.axpby(1.0 / noise, target, -libm::sqrt(ab) / noise)
        }
        ScheduleKind::RectifiedFlow => {
            let s = schedule.flow_time(t)?;
            if s.is_nan() || s <= 0.0 {
                return Err(Error::NumericDomain(alloc::format!("flow time is zero at step {t}")));
            }
            z_t.axpby(1.0 / s, target, -1.0 / s)
        }
    }
}

/// Every branch predicts towards one fixed target, so conditional and
/// unconditional outputs coincide and every Tweedie projection equals the
/// target.
#[derive(Debug, Clone)]
pub struct PointTargetOracle {
    schedule: NoiseSchedule,
    target: Tensor,
}

impl PointTargetOracle {
    pub fn new(schedule: NoiseSchedule, target: Tensor) -> Self {
        Self { schedule, target }
    }

    pub fn target(&self) -> &Tensor {
        &self.target
    }
}

impl Denoiser for PointTargetOracle {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            mode: mode_for(self.schedule.kind()),
            null_image_branch: true,
            concurrency: Concurrency::Concurrent,
        }
    }

    fn predict(&self, req: &DenoiserRequest<'_>) -> Result<Tensor> {
        req.validate()?;
        prediction_towards(&self.schedule, req.latent, &self.target, req.t)
    }
}

/// One trajectory known to a [`SyntheticEditOracle`].
#[derive(Debug, Clone)]
pub struct OracleCandidate {
    /// Initial latent `z_T` of the trajectory.
    pub noise: Tensor,
    /// Instruction this entry answers to; `None` matches any instruction.
    pub prompt: Option<String>,
    /// Clean latent the guided trajectory must land on.
    pub target: Tensor,
}

/// Instruction-editing oracle with a per-trajectory target.
///
/// Instruction-free requests predict towards the unedited source. The
/// conditional branch predicts towards `source + (target - source) / s_T`, so
/// that text guidance at scale `s_T` drives the guided trajectory onto the
/// entry's target. The oracle has no null-image branch. Requests are matched
/// to an entry by instruction and then by the latent nearest to the entry's
/// expected trajectory point.
#[derive(Debug, Clone)]
pub struct SyntheticEditOracle {
    schedule: NoiseSchedule,
    source: Tensor,
    candidates: Vec<OracleCandidate>,
    cond_targets: Vec<Tensor>,
}

impl SyntheticEditOracle {
    pub fn new(
        schedule: NoiseSchedule,
        source: Tensor,
        guidance: &GuidanceConfig,
        candidates: Vec<OracleCandidate>,
    ) -> Result<Self> {
        if guidance.text_scale == 0.0 || !guidance.text_scale.is_finite() {
            return Err(invalid!("synthetic oracle needs a finite non-zero text scale"));
        }
        if candidates.is_empty() {
            return Err(invalid!("synthetic oracle needs at least one candidate"));
        }
        let inv = 1.0 / guidance.text_scale;
        let cond_targets = candidates
            .iter()
            .map(|c| {
                c.noise.ensure_same_shape(&source, "oracle candidate noise")?;
                c.target.ensure_same_shape(&source, "oracle candidate target")?;
                // source + (target - source) / s_T
                source.axpby(1.0 - inv, &c.target, inv)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            schedule,
            source,
            candidates,
            cond_targets,
        })
    }

    pub fn candidates(&self) -> &[OracleCandidate] {
        &self.candidates
    }

    pub fn source(&self) -> &Tensor {
        &self.source
    }

    fn identify(&self, z_t: &Tensor, t: usize, prompt: &str) -> Result<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.candidates.iter().enumerate() {
            if c.prompt.as_deref().is_some_and(|p| p != prompt) {
                continue;
            }
            let expected = self.schedule.add_noise(&c.target, &c.noise, t)?;
            let d: f64 = expected
                .data()
                .iter()
                .zip(z_t.data())
                .map(|(&a, &b)| {
                    let d = a as f64 - b as f64;
                    d * d
                })
                .sum();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
            .ok_or_else(|| invalid!("no oracle candidate registered for instruction {prompt:?}"))
    }
}

impl Denoiser for SyntheticEditOracle {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            mode: mode_for(self.schedule.kind()),
            null_image_branch: false,
            concurrency: Concurrency::Concurrent,
        }
    }

    fn predict(&self, req: &DenoiserRequest<'_>) -> Result<Tensor> {
        req.validate()?;
        let target = match req.prompt {
            None => &self.source,
            Some(p) => &self.cond_targets[self.identify(req.latent, req.t, p)?],
        };
        prediction_towards(&self.schedule, req.latent, target, req.t)
    }
}
