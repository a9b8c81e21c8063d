//! Aggregation of benchmark rows into per-method (NFE, median error) points
//! and their Pareto front.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bench::MetricsRow;
use crate::stats::median;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub method: String,
    pub n: usize,
    /// Mean NFE per task.
    pub nfe: f64,
    pub median_bg_mse: f64,
    pub tasks: usize,
    /// Not dominated by any other point of any method.
    pub on_front: bool,
}

/// `a` is no worse than `b` in both coordinates and better in one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Indices of the non-dominated points, ordered by ascending first
/// coordinate.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    let mut front: Vec<usize> = (0..points.len())
        .filter(|&i| !points.iter().any(|&q| dominates(q, points[i])))
        .collect();
    front.sort_by(|&a, &b| {
        points[a]
            .0
            .total_cmp(&points[b].0)
            .then(points[a].1.total_cmp(&points[b].1))
    });
    front
}

/// One point per `(method, n)` group, sorted by method name, then NFE, then
/// `n`.
pub fn summarize(rows: &[MetricsRow]) -> Vec<ParetoPoint> {
    let mut keys: Vec<(String, usize)> = rows.iter().map(|r| (r.method.as_str().to_string(), r.n)).collect();
    keys.sort();
    keys.dedup();
    let mut points: Vec<ParetoPoint> = keys
        .into_iter()
        .map(|(method, n)| {
            let group: Vec<&MetricsRow> = rows
                .iter()
                .filter(|r| r.method.as_str() == method && r.n == n)
                .collect();
            let nfe = group.iter().map(|r| r.nfe as f64).sum::<f64>() / group.len() as f64;
            let errs: Vec<f64> = group.iter().map(|r| r.metrics.bg_mse).collect();
            ParetoPoint {
                method,
                n,
                nfe,
                median_bg_mse: median(&errs).unwrap_or(f64::NAN),
                tasks: group.len(),
                on_front: false,
            }
        })
        .collect();
    let coords: Vec<(f64, f64)> = points.iter().map(|p| (p.nfe, p.median_bg_mse)).collect();
    for i in pareto_front(&coords) {
        points[i].on_front = true;
    }
    points.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.nfe.total_cmp(&b.nfe))
            .then(a.n.cmp(&b.n))
    });
    points
}
