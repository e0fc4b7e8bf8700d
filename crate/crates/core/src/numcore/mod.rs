//! Dense `f64` linear algebra and seeded random number generation.
//!
//! Everything else in the crate is built on [`Matrix`] (row-major, immutable
//! once handed out) and [`Rng`] (single-owner, split into child streams for
//! independent runs).

mod matrix;
mod rng;

pub use matrix::{matmul, orthogonal_init, Matrix, Transpose};
pub use rng::{derive_seed, gaussian, Rng};
