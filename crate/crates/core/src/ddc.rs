//! Diminishing-delta stopping criterion.
//!
//! With `S_k` the best candidate score after the `k`-th executed step, the
//! raw delta is `|S_k - S_{k-1}|`, smoothed by a trailing moving average. The
//! criterion fires once the smoothed delta drops below `tau` times the
//! running maximum of smoothed deltas. A running maximum of zero means the
//! score never moved and counts as converged.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DdcConfig {
    pub tau: f64,
    /// Width of the trailing moving average.
    pub window: usize,
}

impl Default for DdcConfig {
    fn default() -> Self {
        Self { tau: 0.1, window: 5 }
    }
}

impl DdcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(invalid!("tau must lie in (0, 1), got {}", self.tau));
        }
        if self.window == 0 {
            return Err(invalid!("moving-average window must be at least 1"));
        }
        Ok(())
    }
}

/// Score changes at or below this fraction of the score are rounding noise
/// of the `f32` latents and count as zero.
pub const DELTA_RTOL: f64 = 1e-6;

fn raw_delta(prev: f64, cur: f64) -> f64 {
    let d = (cur - prev).abs();
    if d <= DELTA_RTOL * prev.abs().max(cur.abs()) {
        0.0
    } else {
        d
    }
}

/// Smoothed deltas; entry `k - 1` belongs to score `k` (the first score has
/// no delta). Each average covers the last `min(window, k)` raw deltas.
pub fn smoothed_deltas(best_scores: &[f64], window: usize) -> Vec<f64> {
    let raw: Vec<f64> = best_scores.windows(2).map(|w| raw_delta(w[0], w[1])).collect();
    (0..raw.len())
        .map(|k| {
            let from = (k + 1).saturating_sub(window.max(1));
            let slice = &raw[from..=k];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

fn below(value: f64, running_max: f64, tau: f64) -> bool {
    running_max <= 0.0 || value / running_max < tau
}

/// First index `k >= start` of a smoothed-delta sequence where the ratio to
/// the running maximum (taken over the whole prefix) falls below `tau`.
pub fn fire_index(smoothed: &[f64], tau: f64, start: usize) -> Option<usize> {
    let mut running_max = 0.0f64;
    for (k, &d) in smoothed.iter().enumerate() {
        running_max = running_max.max(d);
        if k >= start && below(d, running_max, tau) {
            return Some(k);
        }
    }
    None
}

/// Whether the criterion holds at the latest score. Needs at least two
/// scores.
pub fn ddc_stop(best_scores: &[f64], cfg: &DdcConfig) -> bool {
    if best_scores.len() < 2 {
        return false;
    }
    let smoothed = smoothed_deltas(best_scores, cfg.window);
    let running_max = smoothed.iter().copied().fold(0.0, f64::max);
    below(*smoothed.last().unwrap_or(&0.0), running_max, cfg.tau)
}
