//! Core algorithms for length-efficient reasoning reinforcement learning.
//!
//! This crate implements the LEAD reward-aggregation pipeline and the static
//! baselines it is compared against, on top of a desk-scale categorical toy
//! policy:
//!
//! - [`reward`]: binary correctness plus a length-efficiency reward that is
//!   symmetric around a per-prompt target length calibrated online from the
//!   group's correct rollouts (with min / median / mean-of-all aggregator
//!   variants and a global-budget baseline).
//! - [`advantage`]: group-relative advantages, either scalarized
//!   (combine-then-normalize) or decoupled per reward channel, followed by
//!   weighted combination and batch whitening.
//! - [`controller`]: the PSI (potential-scaled instability) controller that
//!   adapts the correctness/efficiency weight vector online from batch-level
//!   reward statistics, with EMA smoothing and a correctness floor.
//! - [`policy`]: a per-prompt categorical policy over length bins with the
//!   clipped-surrogate objective, exact KL regularizer, and analytic
//!   gradients.
//! - [`env`]: a synthetic reasoning environment with latent per-prompt
//!   reasoning budgets and a logistic length-conditioned correctness model.
//! - [`trainer`]: the per-step orchestration of sampling, scoring, weighting,
//!   and the policy update for every method variant.
//! - [`metrics`]: accuracy-efficiency scoring, difficulty tiers, rank
//!   correlation, and per-tier length deltas.
//!
//! The crate is `no_std`-compatible (alloc required); file IO, configuration,
//! and the CLI live in the companion `lead-sim` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod advantage;
pub mod controller;
pub mod env;
pub mod error;
pub mod metrics;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
