//! Background inconsistency score, the foreground-change signal, and ranking.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::{Result, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisReport {
    pub candidate_id: usize,
    pub t: usize,
    pub score: f64,
    /// Elementwise `weight * |z0_hat - source|`, when retained.
    #[serde(skip)]
    pub map: Option<Tensor>,
}

/// Checks that a single-channel `[H, W]` weight matches a latent's spatial
/// size and returns the number of pixels per channel.
fn plane_len(latent: &Tensor, weight: &Tensor) -> Result<usize> {
    let (_, h, w) = latent.channels_hw()?;
    if weight.shape() != [h, w] {
        return Err(invalid!(
            "weight shape {:?} does not match latent plane [{h}, {w}]",
            weight.shape()
        ));
    }
    Ok(h * w)
}

/// Weighted elementwise `|z0_hat - source|`, reduced by the mean over every
/// element. The `[H, W]` weight is applied to each channel.
pub fn bis_score(z0_hat: &Tensor, source: &Tensor, weight: &Tensor) -> Result<BisReport> {
    z0_hat.ensure_same_shape(source, "bis_score")?;
    let hw = plane_len(z0_hat, weight)?;
    let w = weight.data();
    let map: Vec<f32> = z0_hat
        .data()
        .iter()
        .zip(source.data())
        .enumerate()
        .map(|(k, (&a, &b))| w[k % hw] * (a - b).abs())
        .collect();
    let map = Tensor::new(z0_hat.shape().to_vec(), map)?;
    Ok(BisReport {
        candidate_id: 0,
        t: 0,
        score: map.mean(),
        map: Some(map),
    })
}

/// Mean over elements of `m^2 * (z0_hat - source)^2`.
pub fn fg_score(z0_hat: &Tensor, source: &Tensor, mean_map: &Tensor) -> Result<f64> {
    z0_hat.ensure_same_shape(source, "fg_score")?;
    let hw = plane_len(z0_hat, mean_map)?;
    let m = mean_map.data();
    let total: f64 = z0_hat
        .data()
        .iter()
        .zip(source.data())
        .enumerate()
        .map(|(k, (&a, &b))| {
            let mm = m[k % hw] as f64;
            let d = a as f64 - b as f64;
            mm * mm * d * d
        })
        .sum();
    Ok(total / z0_hat.len() as f64)
}

/// Candidate ids ordered by ascending score, ties broken by the lower id.
pub fn rank_candidates(reports: &[BisReport]) -> Result<Vec<usize>> {
    let first = reports
        .first()
        .ok_or_else(|| invalid!("cannot rank an empty candidate list"))?;
    if reports.iter().any(|r| r.t != first.t) {
        return Err(invalid!("reports come from different steps"));
    }
    if reports.iter().any(|r| !r.score.is_finite()) {
        return Err(invalid!("non-finite score"));
    }
    let mut order: Vec<&BisReport> = reports.iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.candidate_id.cmp(&b.candidate_id)));
    Ok(order.into_iter().map(|r| r.candidate_id).collect())
}

/// Selection rule combining the background and foreground signals: keep the
/// background argmin unless its foreground change is below the pool median,
/// in which case take the foreground argmax.
pub fn hybrid_select(bg_order: &[usize], fg_scores: &[f64]) -> Result<usize> {
    let &bg_best = bg_order
        .first()
        .ok_or_else(|| invalid!("cannot select from an empty pool"))?;
    let median = crate::stats::median(fg_scores).ok_or_else(|| invalid!("no foreground scores"))?;
    let fg_of = |id: usize| {
        fg_scores
            .get(id)
            .copied()
            .ok_or_else(|| invalid!("candidate {id} has no foreground score"))
    };
    if fg_of(bg_best)? >= median {
        return Ok(bg_best);
    }
    let mut best = 0;
    for (i, &s) in fg_scores.iter().enumerate() {
        if s > fg_scores[best] {
            best = i;
        }
    }
    Ok(best)
}
