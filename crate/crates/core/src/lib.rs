//! Generative modelling with the extreme-value (min-over-guesses) loss.
//!
//! A noise-driven network emits `K` guesses per step; only the guess closest
//! to each target is pulled towards it, which drives the guesses to cover
//! the support of the data rather than collapsing onto its mean. An extra
//! logit per guess, trained with cross-entropy against which guess won,
//! lets [`evl::rejection_sample`] reweight the guesses into the data
//! distribution itself.
//!
//! Alongside the model the crate carries what is needed to measure it:
//! synthetic datasets ([`datasets`]), empirical-histogram and EM Gaussian
//! mixture baselines ([`baselines`]), histogram KL / Fisher-Rao divergences
//! ([`metrics`]) and an experiment runner ([`harness`]).

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod datasets;
mod error;
pub mod evl;
pub mod harness;
pub mod metrics;
pub mod neuralnet;
pub mod numcore;

pub use error::{Error, Result};
