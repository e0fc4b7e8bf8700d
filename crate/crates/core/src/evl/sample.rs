use super::net::split_outputs;
use super::{EvlNet, GuessBatch};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

/// Guess rows pushed through the network per forward call.
const ROWS_PER_FORWARD: usize = 4096;

/// Index of the guess kept from `batch`, drawn with the batch's softmax probabilities.
pub fn select_guess(batch: &GuessBatch, rng: &mut Rng) -> usize {
    rng.categorical(&batch.probs)
}

/// Draws `n` samples from the reweighted distribution: for each sample, a
/// fresh batch of `k` guesses is generated and one guess is kept with
/// probability given by the softmax of the batch logits.
pub fn rejection_sample(net: &EvlNet, rng: &mut Rng, n: usize, k: usize) -> Result<Matrix> {
    rejection_sample_batched(net, rng, n, k, 1)
}

/// Like [`rejection_sample`], but keeps `draws_per_batch` independent
/// categorical draws (with replacement) from every guess batch.
///
/// Each kept sample has exactly the same marginal distribution as with one
/// draw per batch; samples from the same batch are correlated. With
/// `draws_per_batch == 1` the output is identical to [`rejection_sample`]
/// for the same `rng` state.
pub fn rejection_sample_batched(
    net: &EvlNet,
    rng: &mut Rng,
    n: usize,
    k: usize,
    draws_per_batch: usize,
) -> Result<Matrix> {
    if k == 0 || draws_per_batch == 0 {
        return Err(Error::InvalidArgument(
            "guess batch size and draws per batch must be at least 1".into(),
        ));
    }
    let d = net.data_dim();
    let mut data = Vec::with_capacity(n * d);
    let mut batches_left = n.div_ceil(draws_per_batch);
    let batches_per_forward = (ROWS_PER_FORWARD / k).max(1);
    let mut emitted = 0;
    while batches_left > 0 {
        let batches = batches_per_forward.min(batches_left);
        let noise = net.draw_noise(batches * k, rng);
        let out = net.trunk().predict(&noise)?;
        let (coords, logits) = split_outputs(&out, d);
        for b in 0..batches {
            let rows: Vec<usize> = (b * k..(b + 1) * k).collect();
            let batch = GuessBatch::new(coords.select_rows(&rows), logits[b * k..(b + 1) * k].to_vec())?;
            for _ in 0..draws_per_batch.min(n - emitted) {
                data.extend_from_slice(batch.coords.row(select_guess(&batch, rng)));
                emitted += 1;
            }
        }
        batches_left -= batches;
    }
    Matrix::new(n, d, data)
}

/// `n` raw guesses with no reweighting (the push-forward of the noise).
pub fn push_forward_sample(net: &EvlNet, rng: &mut Rng, n: usize) -> Result<Matrix> {
    let d = net.data_dim();
    let mut data = Vec::with_capacity(n * d);
    let mut left = n;
    while left > 0 {
        let rows = left.min(ROWS_PER_FORWARD);
        let out = net.trunk().predict(&net.draw_noise(rows, rng))?;
        for row in out.iter_rows() {
            data.extend_from_slice(&row[..d]);
        }
        left -= rows;
    }
    Matrix::new(n, d, data)
}
