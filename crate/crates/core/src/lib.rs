//! Early-timestep candidate selection for instruction-guided diffusion editing.
//!
//! N seed (or prompt) candidates are denoised only to an early stopping step,
//! ranked by a background inconsistency score computed from Tweedie-projected
//! latents and an aggregated edit relevance map, and only the winner is
//! denoised to completion.
//!
//! The crate is `no_std` with `alloc`. The `std` feature (default) adds
//! `std::error::Error` integration; `parallel` steps candidates on a rayon
//! pool when the denoiser allows concurrent calls.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bench;
pub mod ddc;
pub mod denoiser;
pub mod elct;
pub mod engine;
mod error;
pub mod metrics;
pub mod oracle;
pub mod pareto;
pub mod prompt;
pub mod relevance;
pub mod rng;
pub mod schedule;
pub mod scoring;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
