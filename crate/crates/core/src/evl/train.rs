use serde::{Deserialize, Serialize};

use super::loss::{backprop, evaluate_batch, LossSpec};
use super::{EvlNet, GuessLayout};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::neuralnet::{lr_at_epoch, rmsprop_step, GuessMode, RmspropState, TrainConfig};
use crate::numcore::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Target-weighted means over the epoch's batches.
    pub loss: f64,
    pub mse: f64,
    pub ce: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,loss,mse,ce\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{},{},{}\n", e.epoch, e.lr, e.loss, e.mse, e.ce));
        }
        s
    }
}

/// Trains `net` on `data` with the extreme-value loss.
///
/// Each epoch shuffles the data and walks it in batches of
/// `cfg.batch_size` targets. Every batch draws fresh noise (one shared set
/// of `cfg.guesses` rows, or `cfg.guesses` rows per target in independent
/// mode), takes one RMSprop step on the batch loss, and uses the learning
/// rate scheduled for the current epoch.
pub fn train(net: &mut EvlNet, data: &Dataset, cfg: &TrainConfig, rng: &mut Rng) -> Result<TrainHistory> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != net.data_dim() {
        return Err(Error::shape("train", net.data_dim(), data.dim()));
    }
    if net.noise_dim() != cfg.noise_dim {
        return Err(Error::shape("train (noise_dim)", cfg.noise_dim, net.noise_dim()));
    }
    let layout = match cfg.guess_mode {
        GuessMode::Shared => GuessLayout::Shared { k: cfg.guesses },
        GuessMode::Independent => GuessLayout::Independent { k: cfg.guesses },
    };
    let spec = LossSpec {
        q: cfg.loss_exponent,
        mse_weight: cfg.mse_weight,
        ce_weight: cfg.ce_weight,
    };
    let d = net.data_dim();
    let mut state = RmspropState::new(net.trunk(), cfg.rms_decay, cfg.rms_eps);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let lr = lr_at_epoch(cfg, epoch);
        rng.shuffle(&mut order);
        let (mut loss, mut mse, mut ce) = (0.0, 0.0, 0.0);
        for idx in order.chunks(cfg.batch_size) {
            let targets = data.points.select_rows(idx);
            let noise = net.draw_noise(layout.rows_needed(idx.len()), rng);
            let (out, cache) = net.trunk().forward(&noise)?;
            let eval = evaluate_batch(&out, d, &targets, layout, spec);
            let grads = backprop(net.trunk(), &cache, &eval, d, cfg.ce_into_trunk)?;
            rmsprop_step(net.trunk_mut(), &mut state, &grads, lr)?;

            let w = idx.len() as f64;
            loss += eval.loss * w;
            mse += eval.mse * w;
            ce += eval.ce * w;
        }
        let n = data.len() as f64;
        let stats = EpochStats {
            epoch,
            lr,
            loss: loss / n,
            mse: mse / n,
            ce: ce / n,
        };
        log::debug!(
            "epoch {epoch}: lr {lr:.3e} loss {:.5} mse {:.5} ce {:.5}",
            stats.loss,
            stats.mse,
            stats.ce
        );
        if !stats.loss.is_finite() {
            return Err(Error::InvalidArgument(format!("training diverged at epoch {epoch}")));
        }
        history.epochs.push(stats);
    }
    Ok(history)
}
