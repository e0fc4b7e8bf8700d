use serde::{Deserialize, Serialize};

use super::MlpParams;
use crate::error::{Error, Result};

/// How guesses are drawn for a batch of targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GuessMode {
    /// Every target gets its own `guesses` noise draws.
    Independent,
    /// One set of `guesses` draws per batch; each target is matched to its nearest.
    #[default]
    Shared,
}

impl std::str::FromStr for GuessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(GuessMode::Independent),
            "shared" => Ok(GuessMode::Shared),
            other => Err(Error::InvalidArgument(format!("unknown guess mode {other:?}"))),
        }
    }
}

/// Training recipe for the extreme-value network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_decay_per_epoch: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub guesses: usize,
    pub noise_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub loss_exponent: f64,
    pub mse_weight: f64,
    pub ce_weight: f64,
    pub guess_mode: GuessMode,
    /// When false the cross-entropy gradient only reaches the output layer's
    /// logit column and never the shared hidden layers.
    pub ce_into_trunk: bool,
    pub rms_decay: f64,
    pub rms_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 5e-4,
            lr_decay_per_epoch: 0.95,
            epochs: 50,
            batch_size: 200,
            guesses: 128,
            noise_dim: 16,
            hidden_width: 256,
            hidden_layers: 5,
            loss_exponent: 2.0,
            mse_weight: 1.0,
            ce_weight: 1.0,
            guess_mode: GuessMode::Shared,
            ce_into_trunk: true,
            rms_decay: 0.9,
            rms_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lr0 > 0.0) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.lr_decay_per_epoch > 0.0 && self.lr_decay_per_epoch <= 1.0) {
            return bad(format!("lr decay must lie in (0, 1], got {}", self.lr_decay_per_epoch));
        }
        if self.guesses == 0 || self.batch_size == 0 || self.noise_dim == 0 {
            return bad("guesses, batch_size and noise_dim must be at least 1".into());
        }
        if self.hidden_width == 0 {
            return bad("hidden_width must be at least 1".into());
        }
        if !(self.loss_exponent > 0.0) {
            return bad(format!("loss exponent must be positive, got {}", self.loss_exponent));
        }
        if !(0.0..1.0).contains(&self.rms_decay) || !(self.rms_eps > 0.0) {
            return bad("rms_decay must lie in [0, 1) and rms_eps be positive".into());
        }
        Ok(())
    }
}

/// Learning rate for a zero-based epoch: `lr0 * decay^epoch`.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.lr0 * cfg.lr_decay_per_epoch.powi(epoch as i32)
}

/// Per-parameter running mean of squared gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmspropState {
    pub accum: MlpParams,
    pub decay: f64,
    pub eps: f64,
    pub steps: u64,
}

impl RmspropState {
    pub fn new(params: &MlpParams, decay: f64, eps: f64) -> Self {
        Self {
            accum: params.zeros_like(),
            decay,
            eps,
            steps: 0,
        }
    }
}

/// `s <- decay s + (1 - decay) g^2`, then `theta <- theta - lr g / (sqrt(s) + eps)`.
pub fn rmsprop_step(
    params: &mut MlpParams,
    state: &mut RmspropState,
    grads: &MlpParams,
    lr: f64,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.accum) {
        return Err(Error::shape(
            "rmsprop_step",
            format!("{:?}", params.dims()),
            format!("grads {:?}, state {:?}", grads.dims(), state.accum.dims()),
        ));
    }
    let (rho, eps) = (state.decay, state.eps);
    for ((theta, s), g) in params
        .values_mut()
        .zip(state.accum.values_mut())
        .zip(grads.values())
    {
        *s = rho * *s + (1.0 - rho) * g * g;
        *theta -= lr * g / (s.sqrt() + eps);
    }
    state.steps += 1;
    Ok(())
}
