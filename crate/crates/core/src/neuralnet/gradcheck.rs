use super::MlpParams;
use crate::error::Result;
use crate::numcore::{Matrix, Rng};

/// Finite-difference step used by [`gradient_check`].
pub const FD_STEP: f64 = 1e-5;

/// A deterministic scalar loss of network parameters.
pub trait Objective {
    /// Loss value and its analytic gradient.
    fn loss_and_grad(&self, params: &MlpParams) -> Result<(f64, MlpParams)>;

    /// Loss value plus a fingerprint of every discrete branch taken while
    /// computing it (ReLU masks, argmin choices). Two evaluations with equal
    /// fingerprints lie on the same smooth piece of the loss.
    fn loss_and_pattern(&self, params: &MlpParams) -> Result<(f64, u64)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameters compared against finite differences.
    pub probed: usize,
    /// Candidates discarded because a perturbation crossed a kink.
    pub skipped_kinks: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}

/// Compares analytic gradients with central differences on `samples` randomly
/// chosen parameters.
///
/// A candidate whose `+h` or `-h` evaluation changes the discrete pattern is
/// sitting on (or within `h` of) a kink and is replaced by another draw; at
/// most `20 * samples` candidates are tried.
pub fn gradient_check(
    params: &MlpParams,
    objective: &dyn Objective,
    samples: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    let (_, analytic) = objective.loss_and_grad(params)?;
    let (_, base_pattern) = objective.loss_and_pattern(params)?;
    let n = params.param_count();
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        probed: 0,
        skipped_kinks: 0,
    };
    let mut attempts = 0;
    while report.probed < samples && attempts < 20 * samples {
        attempts += 1;
        let idx = rng.below(n);
        let theta = params.param(idx);

        probe.set_param(idx, theta + FD_STEP);
        let (plus, p_plus) = objective.loss_and_pattern(&probe)?;
        probe.set_param(idx, theta - FD_STEP);
        let (minus, p_minus) = objective.loss_and_pattern(&probe)?;
        probe.set_param(idx, theta);

        if p_plus != base_pattern || p_minus != base_pattern {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let err = relative_error(analytic.param(idx), numeric);
        report.max_relative_error = report.max_relative_error.max(err);
        report.probed += 1;
    }
    Ok(report)
}

/// Half squared error against fixed targets: `0.5 * sum (f(x) - y)^2 / batch`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl Objective for QuadraticObjective {
    fn loss_and_grad(&self, params: &MlpParams) -> Result<(f64, MlpParams)> {
        let (out, cache) = params.forward(&self.inputs)?;
        let batch = self.inputs.rows() as f64;
        let mut grad = out.clone();
        let mut loss = 0.0;
        for (g, t) in grad.data_mut().iter_mut().zip(self.targets.data()) {
            let diff = *g - t;
            loss += 0.5 * diff * diff / batch;
            *g = diff / batch;
        }
        Ok((loss, params.backward(&cache, &grad)?))
    }

    fn loss_and_pattern(&self, params: &MlpParams) -> Result<(f64, u64)> {
        let (out, cache) = params.forward(&self.inputs)?;
        let batch = self.inputs.rows() as f64;
        let loss = out
            .data()
            .iter()
            .zip(self.targets.data())
            .map(|(o, t)| 0.5 * (o - t) * (o - t) / batch)
            .sum();
        Ok((loss, cache.activation_fingerprint()))
    }
}
