use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::{EvlNet, GuessBatch};
use crate::error::{Error, Result};
use crate::neuralnet::{MlpParams, Objective};
use crate::numcore::{Matrix, Transpose};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Mean over dimensions of `|guess - target|^q`.
#[inline]
pub fn per_guess_loss(guess: &[f64], target: &[f64], q: f64) -> f64 {
    let sum: f64 = if q == 2.0 {
        guess.iter().zip(target).map(|(g, t)| (g - t) * (g - t)).sum()
    } else {
        guess.iter().zip(target).map(|(g, t)| (g - t).abs().powf(q)).sum()
    };
    sum / guess.len() as f64
}

/// Index of the lowest-loss row of `coords` for `target`; ties go to the lowest index.
fn argmin_guess(coords: &Matrix, rows: std::ops::Range<usize>, target: &[f64], q: f64) -> (usize, f64) {
    let mut best = (rows.start, f64::INFINITY);
    for i in rows {
        let l = per_guess_loss(coords.row(i), target, q);
        if l < best.1 {
            best = (i, l);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvlLoss {
    pub winner: usize,
    pub mse_min: f64,
    pub ce: f64,
}

/// Extreme-value loss of one target against a guess batch.
pub fn evl_loss(guesses: &GuessBatch, target: &[f64], q: f64) -> Result<EvlLoss> {
    if guesses.coords.cols() != target.len() {
        return Err(Error::shape("evl_loss", guesses.coords.cols(), target.len()));
    }
    if !(q > 0.0) {
        return Err(Error::InvalidArgument(format!("loss exponent must be positive, got {q}")));
    }
    let (winner, mse_min) = argmin_guess(&guesses.coords, 0..guesses.len(), target, q);
    let ce = log_sum_exp(&guesses.logits) - guesses.logits[winner];
    Ok(EvlLoss {
        winner,
        mse_min,
        ce: ce.max(0.0),
    })
}

/// For each target row, the index of its lowest-loss guess among the shared `coords`.
pub fn match_shared(coords: &Matrix, targets: &Matrix, q: f64) -> Result<Vec<usize>> {
    if coords.cols() != targets.cols() {
        return Err(Error::shape("match_shared", coords.cols(), targets.cols()));
    }
    if coords.rows() == 0 {
        return Err(Error::InvalidArgument("no guesses to match against".into()));
    }
    Ok(targets
        .iter_rows()
        .map(|t| argmin_guess(coords, 0..coords.rows(), t, q).0)
        .collect())
}

/// Which guess rows each target is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuessLayout {
    /// All targets share rows `0..k`.
    Shared { k: usize },
    /// Target `j` owns rows `j*k..(j+1)*k`.
    Independent { k: usize },
}

impl GuessLayout {
    pub fn rows_needed(&self, targets: usize) -> usize {
        match *self {
            GuessLayout::Shared { k } => k,
            GuessLayout::Independent { k } => k * targets,
        }
    }

    fn group(&self, target: usize) -> std::ops::Range<usize> {
        match *self {
            GuessLayout::Shared { k } => 0..k,
            GuessLayout::Independent { k } => target * k..(target + 1) * k,
        }
    }

    fn group_count(&self, targets: usize) -> usize {
        match self {
            GuessLayout::Shared { .. } => 1,
            GuessLayout::Independent { .. } => targets,
        }
    }
}

/// Loss weights and exponent shared by training and gradient checks.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LossSpec {
    pub q: f64,
    pub mse_weight: f64,
    pub ce_weight: f64,
}

/// Scalar batch loss with its gradient with respect to the raw network outputs.
pub(crate) struct BatchEval {
    pub loss: f64,
    pub mse: f64,
    pub ce: f64,
    pub winners: Vec<usize>,
    pub output_grad: Matrix,
}

/// Batch loss `mean_j (mse_w * l_j + ce_w * ce_j)` over targets.
///
/// Coordinate gradients reach only each target's winning guess; the
/// cross-entropy gradient `ce_w (p - onehot(winner)) / B` reaches every
/// logit in the target's group.
pub(crate) fn evaluate_batch(
    outputs: &Matrix,
    data_dim: usize,
    targets: &Matrix,
    layout: GuessLayout,
    spec: LossSpec,
) -> BatchEval {
    let b = targets.rows();
    debug_assert_eq!(outputs.rows(), layout.rows_needed(b));
    debug_assert_eq!(outputs.cols(), data_dim + 1);
    let coords = outputs.column_block(0, data_dim);
    let logits: Vec<f64> = outputs.iter_rows().map(|r| r[data_dim]).collect();
    let inv_b = 1.0 / b as f64;
    let q = spec.q;

    let mut grad = Matrix::zeros(outputs.rows(), outputs.cols());
    let mut winners = Vec::with_capacity(b);
    let mut mse_total = 0.0;
    let mut ce_total = 0.0;

    // Softmax per group, computed once.
    let groups = layout.group_count(b);
    let mut group_probs = Vec::with_capacity(groups);
    let mut group_lse = Vec::with_capacity(groups);
    for g in 0..groups {
        let rows = layout.group(g);
        group_probs.push(softmax(&logits[rows.clone()]));
        group_lse.push(log_sum_exp(&logits[rows]));
    }

    for (j, target) in targets.iter_rows().enumerate() {
        let rows = layout.group(j);
        let group = if groups == 1 { 0 } else { j };
        let (w, l) = argmin_guess(&coords, rows.clone(), target, q);
        winners.push(w);
        mse_total += l;
        ce_total += group_lse[group] - logits[w];

        let scale = spec.mse_weight * inv_b / data_dim as f64;
        let grow = grad.row_mut(w);
        for ((gv, c), t) in grow[..data_dim].iter_mut().zip(coords.row(w)).zip(target) {
            let diff = c - t;
            let dl = if q == 2.0 {
                2.0 * diff
            } else if diff == 0.0 {
                0.0
            } else {
                q * diff.abs().powf(q - 1.0) * diff.signum()
            };
            *gv += scale * dl;
        }
        grad.row_mut(w)[data_dim] -= spec.ce_weight * inv_b;
    }
    // + ce_w * p / B for every target in the group
    for (g, probs) in group_probs.iter().enumerate() {
        let members = match layout {
            GuessLayout::Shared { .. } => b as f64,
            GuessLayout::Independent { .. } => 1.0,
        };
        for (i, p) in layout.group(g).zip(probs) {
            grad.row_mut(i)[data_dim] += spec.ce_weight * inv_b * members * p;
        }
    }

    let mse = mse_total * inv_b;
    let ce = ce_total * inv_b;
    BatchEval {
        loss: spec.mse_weight * mse + spec.ce_weight * ce,
        mse,
        ce,
        winners,
        output_grad: grad,
    }
}

/// Parameter gradients for a batch evaluation, optionally keeping the
/// cross-entropy signal out of the hidden layers.
pub(crate) fn backprop(
    trunk: &MlpParams,
    cache: &crate::neuralnet::ForwardCache,
    eval: &BatchEval,
    data_dim: usize,
    ce_into_trunk: bool,
) -> Result<MlpParams> {
    if ce_into_trunk {
        return trunk.backward(cache, &eval.output_grad);
    }
    let mut coord_grad = eval.output_grad.clone();
    let mut logit_grad = Matrix::zeros(coord_grad.rows(), 1);
    for r in 0..coord_grad.rows() {
        logit_grad.set(r, 0, coord_grad.get(r, data_dim));
        coord_grad.set(r, data_dim, 0.0);
    }
    let mut grads = trunk.backward(cache, &coord_grad)?;
    let last_input = cache.layer_inputs().last().expect("non-empty network");
    let mut col = Matrix::zeros(last_input.cols(), 1);
    Matrix::gemm(1.0, last_input, Transpose::Yes, &logit_grad, Transpose::No, 0.0, &mut col)?;
    let last = grads.layers_mut().last_mut().expect("non-empty network");
    for (i, v) in col.data().iter().enumerate() {
        let cur = last.weights.get(i, data_dim);
        last.weights.set(i, data_dim, cur + v);
    }
    last.bias[data_dim] += logit_grad.data().iter().sum::<f64>();
    Ok(grads)
}

/// The training loss on frozen noise and targets, as a function of the trunk
/// parameters. Used to check backpropagation end to end.
#[derive(Debug, Clone)]
pub struct EvlObjective {
    pub noise: Matrix,
    pub targets: Matrix,
    pub data_dim: usize,
    pub layout: GuessLayout,
    pub q: f64,
    pub mse_weight: f64,
    pub ce_weight: f64,
    pub ce_into_trunk: bool,
}

impl EvlObjective {
    fn spec(&self) -> LossSpec {
        LossSpec {
            q: self.q,
            mse_weight: self.mse_weight,
            ce_weight: self.ce_weight,
        }
    }

    pub fn for_net(net: &EvlNet, noise: Matrix, targets: Matrix, layout: GuessLayout) -> Self {
        Self {
            noise,
            targets,
            data_dim: net.data_dim(),
            layout,
            q: 2.0,
            mse_weight: 1.0,
            ce_weight: 1.0,
            ce_into_trunk: true,
        }
    }
}

impl Objective for EvlObjective {
    fn loss_and_grad(&self, params: &MlpParams) -> Result<(f64, MlpParams)> {
        let (out, cache) = params.forward(&self.noise)?;
        let eval = evaluate_batch(&out, self.data_dim, &self.targets, self.layout, self.spec());
        let grads = backprop(params, &cache, &eval, self.data_dim, self.ce_into_trunk)?;
        Ok((eval.loss, grads))
    }

    fn loss_and_pattern(&self, params: &MlpParams) -> Result<(f64, u64)> {
        let (out, cache) = params.forward(&self.noise)?;
        let eval = evaluate_batch(&out, self.data_dim, &self.targets, self.layout, self.spec());
        let mut h = DefaultHasher::new();
        cache.activation_fingerprint().hash(&mut h);
        eval.winners.hash(&mut h);
        Ok((eval.loss, h.finish()))
    }
}
