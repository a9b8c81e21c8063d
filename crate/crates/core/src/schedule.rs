//! Noise schedules and sampler steps.
//!
//! Inference steps are labelled `t = T..=1`; label 0 is the clean latent.
//! For diffusion, `alpha_bar[t]` is the cumulative signal coefficient at
//! label `t` with `alpha_bar[0] = 1`. For rectified flow, label `t` sits at
//! continuous time `t / T`, where time 1 is pure noise and time 0 is data.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::{Error, Result, Tensor};

pub const TRAIN_TIMESTEPS: usize = 1000;
pub const BETA_START: f64 = 0.00085;
pub const BETA_END: f64 = 0.012;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Ddim,
    RectifiedFlow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    steps: usize,
    /// Indexed by step label, `len = steps + 1`. All ones for rectified flow.
    alpha_bar: Vec<f64>,
    /// Descending grid `1 - k / T`, `len = steps + 1`.
    rf_times: Vec<f64>,
}

/// Cumulative products of `1 - beta` for the scaled-linear training schedule
/// (`sqrt(beta)` linear from `sqrt(BETA_START)` to `sqrt(BETA_END)`).
pub fn scaled_linear_alphas_cumprod() -> Vec<f64> {
    let (a, b) = (libm::sqrt(BETA_START), libm::sqrt(BETA_END));
    let last = (TRAIN_TIMESTEPS - 1) as f64;
    let mut acc = 1.0;
    (0..TRAIN_TIMESTEPS)
        .map(|i| {
            let s = a + (b - a) * i as f64 / last;
            acc *= 1.0 - s * s;
            acc
        })
        .collect()
}

pub fn make_schedule(kind: ScheduleKind, steps: usize) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(invalid!("schedule needs at least 2 steps, got {steps}"));
    }
    let rf_times: Vec<f64> = (0..=steps).map(|k| 1.0 - k as f64 / steps as f64).collect();
    let alpha_bar = match kind {
        ScheduleKind::Ddim => {
            if steps > TRAIN_TIMESTEPS {
                return Err(invalid!(
                    "at most {TRAIN_TIMESTEPS} inference steps supported, got {steps}"
                ));
            }
            let cumprod = scaled_linear_alphas_cumprod();
            let stride = TRAIN_TIMESTEPS as f64 / steps as f64;
            let mut ab = Vec::with_capacity(steps + 1);
            ab.push(1.0);
            // Label t maps to training index round(t * stride) - 1, so the
            // last label lands on the final training step.
            ab.extend((1..=steps).map(|t| cumprod[libm::round(t as f64 * stride) as usize - 1]));
            ab
        }
        ScheduleKind::RectifiedFlow => alloc::vec![1.0; steps + 1],
    };
    Ok(NoiseSchedule {
        kind,
        steps,
        alpha_bar,
        rf_times,
    })
}

impl NoiseSchedule {
    /// Diffusion schedule from explicit coefficients, `alpha_bar[0] = 1`
    /// followed by a strictly decreasing sequence in (0, 1).
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        let steps = alpha_bar.len().saturating_sub(1);
        if steps < 2 {
            return Err(invalid!("schedule needs at least 2 steps, got {steps}"));
        }
        if alpha_bar[0] != 1.0 {
            return Err(invalid!("alpha_bar[0] must be 1, got {}", alpha_bar[0]));
        }
        if alpha_bar.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(invalid!("alpha_bar values must lie in (0, 1]"));
        }
        if alpha_bar.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid!("alpha_bar must be strictly decreasing"));
        }
        Ok(Self {
            kind: ScheduleKind::Ddim,
            steps,
            alpha_bar,
            rf_times: (0..=steps).map(|k| 1.0 - k as f64 / steps as f64).collect(),
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.check_label(t)?;
        Ok(self.alpha_bar[t])
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Rectified-flow grid, descending from 1 to 0.
    pub fn rf_times(&self) -> &[f64] {
        &self.rf_times
    }

    /// Continuous rectified-flow time of step label `t`.
    pub fn flow_time(&self, t: usize) -> Result<f64> {
        self.check_label(t)?;
        Ok(self.rf_times[self.steps - t])
    }

    /// `sqrt(alpha_bar / (1 - alpha_bar))`, infinite at label 0.
    pub fn snr_sqrt(&self, t: usize) -> Result<f64> {
        let a = self.alpha_bar(t)?;
        Ok(libm::sqrt(a / (1.0 - a)))
    }

    fn check_label(&self, t: usize) -> Result<()> {
        if t > self.steps {
            return Err(invalid!("step {t} outside 0..={}", self.steps));
        }
        Ok(())
    }

    /// Forward noising `sqrt(ab) z0 + sqrt(1 - ab) eps` (diffusion) or
    /// `(1 - s) z0 + s eps` at flow time `s` (rectified flow).
    pub fn add_noise(&self, z0: &Tensor, eps: &Tensor, t: usize) -> Result<Tensor> {
        z0.ensure_same_shape(eps, "add_noise")?;
        let (a, b) = match self.kind {
            ScheduleKind::Ddim => {
                let ab = self.alpha_bar(t)?;
                (libm::sqrt(ab), libm::sqrt(1.0 - ab))
            }
            ScheduleKind::RectifiedFlow => {
                let s = self.flow_time(t)?;
                (1.0 - s, s)
            }
        };
        z0.axpby(a, eps, b)
    }

    /// Tweedie projection of the clean latent. `pred` is the noise estimate
    /// for diffusion and the velocity for rectified flow.
    pub fn tweedie(&self, z_t: &Tensor, pred: &Tensor, t: usize) -> Result<Tensor> {
        z_t.ensure_same_shape(pred, "tweedie")?;
        match self.kind {
            ScheduleKind::Ddim => {
                let ab = self.alpha_bar(t)?;
                if ab.is_nan() || ab <= 0.0 {
                    return Err(Error::NumericDomain(alloc::format!("alpha_bar at step {t} is {ab}")));
                }
                let s = libm::sqrt(ab);
                z_t.axpby(1.0 / s, pred, -libm::sqrt(1.0 - ab) / s)
            }
            ScheduleKind::RectifiedFlow => {
                let s = self.flow_time(t)?;
                z_t.axpby(1.0, pred, -s)
            }
        }
    }

    /// Deterministic step from label `t` to `t - 1` (DDIM with eta = 0, or an
    /// Euler step of the flow ODE).
    pub fn denoise_step(&self, z_t: &Tensor, pred: &Tensor, t: usize) -> Result<Tensor> {
        if t == 0 {
            return Err(invalid!("cannot step below label 0"));
        }
        z_t.ensure_same_shape(pred, "denoise_step")?;
        match self.kind {
            ScheduleKind::Ddim => {
                let ab_prev = self.alpha_bar(t - 1)?;
                let z0 = self.tweedie(z_t, pred, t)?;
                z0.axpby(libm::sqrt(ab_prev), pred, libm::sqrt(1.0 - ab_prev))
            }
            ScheduleKind::RectifiedFlow => {
                let dt = self.flow_time(t)? - self.flow_time(t - 1)?;
                z_t.axpby(1.0, pred, -dt)
            }
        }
    }
}
