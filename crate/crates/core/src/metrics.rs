//! Background-consistency metrics against a ground-truth foreground mask.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::{Error, Result, Tensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundMetrics {
    pub bg_mse: f64,
    /// `+inf` when `bg_mse` is zero.
    pub psnr: f64,
    pub ssim: f64,
}

/// Source min-to-max range; 1.0 for a constant source.
pub fn data_range(source: &Tensor) -> f64 {
    let r = source.max() as f64 - source.min() as f64;
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

fn check_mask(mask: &Tensor, h: usize, w: usize) -> Result<usize> {
    if mask.shape() != [h, w] {
        return Err(invalid!(
            "mask shape {:?} does not match plane [{h}, {w}]",
            mask.shape()
        ));
    }
    if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
        return Err(invalid!("mask must be binary"));
    }
    let bg = mask.data().iter().filter(|&&m| m == 0.0).count();
    if bg == 0 {
        return Err(Error::DegenerateInput("mask covers the whole image".into()));
    }
    Ok(bg)
}

/// MSE and PSNR over background pixels (`mask == 0`), SSIM over copies with
/// the foreground zeroed in both images.
pub fn background_metrics(edited: &Tensor, source: &Tensor, mask: &Tensor) -> Result<BackgroundMetrics> {
    edited.ensure_same_shape(source, "background_metrics")?;
    let (c, h, w) = source.channels_hw()?;
    let bg = check_mask(mask, h, w)?;
    let hw = h * w;
    let m = mask.data();

    let mut sq = 0.0f64;
    for (k, (&a, &b)) in edited.data().iter().zip(source.data()).enumerate() {
        if m[k % hw] == 0.0 {
            let d = a as f64 - b as f64;
            sq += d * d;
        }
    }
    let bg_mse = sq / (bg * c) as f64;
    let range = data_range(source);
    let psnr = if bg_mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * libm::log10(range * range / bg_mse)
    };

    let masked = |t: &Tensor| -> Vec<f64> {
        t.data()
            .iter()
            .enumerate()
            .map(|(k, &v)| if m[k % hw] == 0.0 { v as f64 } else { 0.0 })
            .collect()
    };
    let (x, y) = (masked(edited), masked(source));
    let ssim = (0..c)
        .map(|ch| ssim_plane(&x[ch * hw..(ch + 1) * hw], &y[ch * hw..(ch + 1) * hw], h, w, range))
        .sum::<f64>()
        / c as f64;
    Ok(BackgroundMetrics { bg_mse, psnr, ssim })
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            libm::exp(-d * d / (2.0 * sigma * sigma))
        })
        .collect();
    let total: f64 = g.iter().sum();
    g.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian filter over valid positions only.
fn filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..k).map(|j| g[j] * plane[r * w + c + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|j| g[j] * rows[(r + j) * ow + c]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean SSIM of one plane with a Gaussian window of `min(11, h, w)` taps.
pub fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize, range: f64) -> f64 {
    let g = gaussian_window(SSIM_WINDOW.min(h).min(w), SSIM_SIGMA);
    let prod = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p * q).collect() };
    let (mx, oh, ow) = filter_valid(x, h, w, &g);
    let (my, _, _) = filter_valid(y, h, w, &g);
    let (sxx, _, _) = filter_valid(&prod(x, x), h, w, &g);
    let (syy, _, _) = filter_valid(&prod(y, y), h, w, &g);
    let (sxy, _, _) = filter_valid(&prod(x, y), h, w, &g);
    let c1 = (SSIM_K1 * range) * (SSIM_K1 * range);
    let c2 = (SSIM_K2 * range) * (SSIM_K2 * range);
    let total: f64 = (0..oh * ow)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    total / (oh * ow) as f64
}
