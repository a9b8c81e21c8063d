//! Robust statistics helpers.

use alloc::vec::Vec;

use crate::error::invalid;
use crate::{Result, Tensor};

/// Quantile of pre-sorted values by linear interpolation between order
/// statistics at rank `(n - 1) * p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = (sorted.len() - 1) as f64 * p;
    let lo = libm::floor(rank) as usize;
    let hi = libm::ceil(rank) as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(quantile_sorted(&sorted, 0.5))
}

/// Clamps values to `[q1 - 1.5 IQR, q3 + 1.5 IQR]` and min-max rescales the
/// result into `[0, 1]`. A map that is constant after clamping maps to zeros.
pub fn iqr_clamp_normalize(map: &Tensor) -> Result<Tensor> {
    let values: Vec<f64> = map.data().iter().map(|&v| v as f64).collect();
    if values.iter().any(|v| v.is_nan()) {
        return Err(invalid!("relevance map contains NaN"));
    }
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);

    let clamped: Vec<f64> = values.iter().map(|v| v.clamp(lo, hi)).collect();
    let min = clamped.iter().copied().fold(f64::INFINITY, f64::min);
    let max = clamped.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let data = if span > 0.0 {
        clamped
            .iter()
            .map(|v| (((v - min) / span) as f32).clamp(0.0, 1.0))
            .collect()
    } else {
        alloc::vec![0.0; clamped.len()]
    };
    Tensor::new(map.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn constant_map_is_zero() {
        let m = Tensor::new(vec![4], vec![5.0; 4]).unwrap();
        assert_eq!(iqr_clamp_normalize(&m).unwrap().data(), &[0.0; 4]);
    }

    #[test]
    fn outlier_is_clamped_then_rescaled() {
        // Sorted [0,1,2,3,100]: q1 = 1, q3 = 3 (ranks 1 and 3 of 4), so the
        // upper fence is 3 + 1.5 * 2 = 6 and 100 clamps to 6.
        let m = Tensor::new(vec![5], vec![0.0, 1.0, 2.0, 3.0, 100.0]).unwrap();
        let out = iqr_clamp_normalize(&m).unwrap();
        let expect = [0.0, 1.0 / 6.0, 2.0 / 6.0, 0.5, 1.0];
        for (a, b) in out.data().iter().zip(expect) {
            assert!((*a as f64 - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn interpolated_quantile() {
        let s = [1.0, 2.0, 4.0, 8.0];
        // rank 0.75 between 1 and 2
        assert!((quantile_sorted(&s, 0.25) - 1.75).abs() < 1e-12);
        assert!((quantile_sorted(&s, 0.75) - 5.0).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[]), None);
    }
}
