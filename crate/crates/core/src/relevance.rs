//! Edit relevance maps and their aggregation into a soft background weight.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::invalid;
use crate::stats::iqr_clamp_normalize;
use crate::{Error, Result, Tensor};

/// Per-pixel mean over channels of `|cond - uncond|`, IQR-clamped and
/// rescaled to `[0, 1]`. Output shape is `[H, W]`.
pub fn relevance_map(cond: &Tensor, uncond: &Tensor) -> Result<Tensor> {
    cond.ensure_same_shape(uncond, "relevance_map")?;
    let (c, h, w) = cond.channels_hw()?;
    let hw = h * w;
    let mut acc = vec![0.0f64; hw];
    for (k, (&a, &b)) in cond.data().iter().zip(uncond.data()).enumerate() {
        acc[k % hw] += (a as f64 - b as f64).abs();
    }
    let raw = Tensor::new(vec![h, w], acc.into_iter().map(|v| (v / c as f64) as f32).collect())?;
    iqr_clamp_normalize(&raw)
}

/// Inclusive range of step labels whose maps are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepWindow {
    pub lo: usize,
    pub hi: usize,
}

impl StepWindow {
    /// The first `len` denoising steps of a `steps`-step run: labels
    /// `steps - len + 1 ..= steps`.
    pub fn leading(steps: usize, len: usize) -> Self {
        let len = len.clamp(1, steps.max(1));
        Self {
            lo: steps + 1 - len,
            hi: steps,
        }
    }

    pub fn contains(&self, t: usize) -> bool {
        (self.lo..=self.hi).contains(&t)
    }
}

/// Running sums of relevance maps per candidate over a step window.
///
/// The pooled mean is formed from the per-candidate sums in candidate-index
/// order, so the result does not depend on the order of `accumulate` calls.
#[derive(Debug, Clone)]
pub struct RelevanceAccumulator {
    window: StepWindow,
    sums: Vec<Option<Vec<f64>>>,
    steps: Vec<Vec<usize>>,
    shape: Option<Vec<usize>>,
}

impl RelevanceAccumulator {
    pub fn new(n_candidates: usize, window: StepWindow) -> Self {
        Self {
            window,
            sums: vec![None; n_candidates],
            steps: vec![Vec::new(); n_candidates],
            shape: None,
        }
    }

    pub fn window(&self) -> StepWindow {
        self.window
    }

    pub fn n_candidates(&self) -> usize {
        self.sums.len()
    }

    /// Steps accumulated so far by `candidate`.
    pub fn steps_accumulated(&self, candidate: usize) -> usize {
        self.steps.get(candidate).map_or(0, Vec::len)
    }

    /// Adds `map` for `candidate` at step `t`. Steps outside the window are
    /// ignored.
    pub fn accumulate(&mut self, candidate: usize, map: &Tensor, t: usize) -> Result<()> {
        if !self.window.contains(t) {
            return Ok(());
        }
        let n = self.sums.len();
        let slot = self
            .sums
            .get_mut(candidate)
            .ok_or_else(|| invalid!("candidate {candidate} out of range (n = {n})"))?;
        match &self.shape {
            Some(s) if s.as_slice() != map.shape() => {
                return Err(invalid!("relevance map shape {:?} != {:?}", map.shape(), s));
            }
            None => self.shape = Some(map.shape().to_vec()),
            _ => {}
        }
        if self.steps[candidate].contains(&t) {
            return Err(Error::State(alloc::format!(
                "candidate {candidate} already contributed step {t}"
            )));
        }
        let sum = slot.get_or_insert_with(|| vec![0.0; map.len()]);
        for (s, &v) in sum.iter_mut().zip(map.data()) {
            *s += v as f64;
        }
        self.steps[candidate].push(t);
        Ok(())
    }

    fn check_consistent(&self) -> Result<()> {
        let mut reference = self.steps.first().cloned().unwrap_or_default();
        reference.sort_unstable();
        if reference.is_empty() {
            return Err(Error::State("no relevance maps accumulated".into()));
        }
        for (i, s) in self.steps.iter().enumerate().skip(1) {
            let mut s = s.clone();
            s.sort_unstable();
            if s != reference {
                return Err(Error::State(alloc::format!(
                    "candidate {i} accumulated steps {s:?}, candidate 0 accumulated {reference:?}"
                )));
            }
        }
        Ok(())
    }

    fn to_tensor(&self, values: Vec<f64>, denom: f64) -> Result<Tensor> {
        let shape = self.shape.clone().ok_or_else(|| Error::State("no maps".into()))?;
        Tensor::new(shape, values.into_iter().map(|v| (v / denom) as f32).collect())
    }

    /// Mean over all candidates and accumulated steps.
    pub fn mean_map(&self) -> Result<Tensor> {
        self.check_consistent()?;
        let len = self.sums[0].as_ref().map_or(0, Vec::len);
        let mut total = vec![0.0f64; len];
        for sum in self.sums.iter().flatten() {
            for (t, s) in total.iter_mut().zip(sum) {
                *t += s;
            }
        }
        let denom = (self.sums.len() * self.steps[0].len()) as f64;
        self.to_tensor(total, denom)
    }

    /// Mean over the accumulated steps of one candidate only.
    pub fn candidate_mean_map(&self, candidate: usize) -> Result<Tensor> {
        self.check_consistent()?;
        let sum = self
            .sums
            .get(candidate)
            .and_then(Clone::clone)
            .ok_or_else(|| invalid!("candidate {candidate} out of range"))?;
        self.to_tensor(sum, self.steps[candidate].len() as f64)
    }
}

/// `1 - m^2` elementwise; the input must lie in `[0, 1]`.
pub fn soft_background_weight(mean_map: &Tensor) -> Result<Tensor> {
    if let Some(v) = mean_map.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(invalid!("mean relevance value {v} outside [0, 1]"));
    }
    mean_map.map(|m| 1.0 - m * m)
}
