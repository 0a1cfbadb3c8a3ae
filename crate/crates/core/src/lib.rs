//! Error analysis of a Gaussian score-based sampling pipeline: a linear
//! score trained by constant-step SGD on the denoising loss, sampled with
//! the unadjusted Langevin algorithm, and scored in Wasserstein-2.
//!
//! Closed forms live beside Monte Carlo and brute-force oracles that check
//! them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gaussian_metrics;
pub mod harness;
pub mod matrixkit;
pub mod pipeline;
pub mod rng;
pub mod langevin;
pub mod score_theory;
pub mod sgd_sim;
pub mod stats;

pub use error::{Error, Result};
