//! Extreme-value loss networks.
//!
//! An [`EvlNet`] maps unit-Gaussian noise to `d` sample coordinates plus one
//! logit. Training scores a target only against the closest of `K` guesses
//! ([`evl_loss`], [`match_shared`]) and teaches the logit, through a softmax
//! over the guess batch, how likely each guess is to be that closest one.
//! [`rejection_sample`] then draws guess batches and keeps one guess per
//! batch according to those probabilities.

mod loss;
mod net;
mod sample;
mod train;

pub use loss::{evl_loss, match_shared, per_guess_loss, softmax, EvlLoss, EvlObjective, GuessLayout};
pub use net::{generate_guesses, guesses_from_noise, EvlCheckpoint, EvlNet, GuessBatch};
pub use sample::{push_forward_sample, rejection_sample, rejection_sample_batched, select_guess};
pub use train::{train, EpochStats, TrainHistory};
