//! Counter-based splitmix64 stream with Box–Muller Gaussian sampling.
//!
//! The generator is fully specified so that other implementations can
//! reproduce the candidate noises bit for bit: the `k`-th `u64` of seed `s`
//! is `mix(s + (k + 1) * 0x9E3779B97F4A7C15)`, each consecutive pair
//! `(a, b)` becomes `u = (a + 1) * 2^-64`, `v = (b + 1) * 2^-64`, and
//! yields `sqrt(-2 ln u) * cos(2 pi v)` followed by `sqrt(-2 ln u) * sin(2 pi v)`.

use alloc::vec::Vec;

use crate::{Result, Tensor};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const TWO_POW_NEG_64: f64 = 1.0 / 18_446_744_073_709_551_616.0;

#[inline]
pub fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded stream position. Identical `(seed, counter)` pairs produce
/// identical output everywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeededRng {
    seed: u64,
    counter: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn at(seed: u64, counter: u64) -> Self {
        Self { seed, counter }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of `u64` words consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        splitmix64_mix(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform on the open interval (0, 1].
    pub fn next_open01(&mut self) -> f64 {
        (self.next_u64() as f64 + 1.0) * TWO_POW_NEG_64
    }

    /// Uniform on [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * ((self.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
    }

    /// One Box–Muller pair.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u = self.next_open01();
        let v = self.next_open01();
        let r = libm::sqrt(-2.0 * libm::log(u));
        let theta = 2.0 * core::f64::consts::PI * v;
        (r * libm::cos(theta), r * libm::sin(theta))
    }

    /// `n` standard normals in stream order. An odd `n` discards the final
    /// sine output, so the counter always advances by `2 * ceil(n / 2)`.
    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        while out.len() < n {
            let (a, b) = self.normal_pair();
            out.push(a);
            out.push(b);
        }
        out.truncate(n);
        out
    }
}

/// Standard-normal tensor drawn in row-major order from `rng`.
pub fn gaussian_noise(rng: &mut SeededRng, shape: &[usize]) -> Result<Tensor> {
    let probe = Tensor::zeros(shape)?;
    let data = rng.normals(probe.len()).into_iter().map(|v| v as f32).collect();
    Tensor::new(shape.to_vec(), data)
}

/// Initial noise of a candidate seed (stream position 0).
pub fn seed_noise(seed: u64, shape: &[usize]) -> Result<Tensor> {
    gaussian_noise(&mut SeededRng::new(seed), shape)
}

/// Derives an independent sub-seed from a parent seed and a tag.
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    splitmix64_mix(parent ^ splitmix64_mix(tag.wrapping_add(GOLDEN_GAMMA)))
}

/// 64-bit FNV-1a, used to key text inputs into seeds.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}
