use std::path::Path;

use serde::{Deserialize, Serialize};

use super::softmax;
use crate::error::{Error, Result};
use crate::neuralnet::{MlpParams, TrainConfig};
use crate::numcore::{Matrix, Rng};

/// Noise-to-sample network: `noise_dim` inputs, `data_dim + 1` outputs
/// (coordinates followed by the selection logit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvlNet {
    trunk: MlpParams,
    data_dim: usize,
}

impl EvlNet {
    /// Orthogonally initialized network with the architecture in `cfg`.
    pub fn new(data_dim: usize, cfg: &TrainConfig, rng: &mut Rng) -> Result<Self> {
        if data_dim == 0 {
            return Err(Error::InvalidArgument("data_dim must be at least 1".into()));
        }
        let mut dims = vec![cfg.noise_dim];
        dims.extend(std::iter::repeat_n(cfg.hidden_width, cfg.hidden_layers));
        dims.push(data_dim + 1);
        Self::from_trunk(MlpParams::init_orthogonal(&dims, rng)?, data_dim)
    }

    pub fn from_trunk(trunk: MlpParams, data_dim: usize) -> Result<Self> {
        if trunk.output_dim() != data_dim + 1 {
            return Err(Error::shape("EvlNet", data_dim + 1, trunk.output_dim()));
        }
        Ok(Self { trunk, data_dim })
    }

    pub fn trunk(&self) -> &MlpParams {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut MlpParams {
        &mut self.trunk
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    /// `rows x noise_dim` block of unit-Gaussian noise.
    pub fn draw_noise(&self, rows: usize, rng: &mut Rng) -> Matrix {
        let cols = self.noise_dim();
        Matrix::new(rows, cols, rng.gaussian_vec(rows * cols)).expect("sized above")
    }
}

/// `K` guesses with their selection logits and softmax probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct GuessBatch {
    pub coords: Matrix,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl GuessBatch {
    pub fn new(coords: Matrix, logits: Vec<f64>) -> Result<Self> {
        if coords.rows() != logits.len() {
            return Err(Error::shape("GuessBatch", coords.rows(), logits.len()));
        }
        if logits.is_empty() {
            return Err(Error::InvalidArgument("a guess batch needs at least one guess".into()));
        }
        let probs = softmax(&logits);
        Ok(Self {
            coords,
            logits,
            probs,
        })
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }
}

/// Splits raw network outputs into coordinates and logits.
pub(crate) fn split_outputs(out: &Matrix, data_dim: usize) -> (Matrix, Vec<f64>) {
    let coords = out.column_block(0, data_dim);
    let logits = out.iter_rows().map(|r| r[data_dim]).collect();
    (coords, logits)
}

/// Pushes the given noise rows through the network as one guess batch.
pub fn guesses_from_noise(net: &EvlNet, noise: &Matrix) -> Result<GuessBatch> {
    let out = net.trunk.predict(noise)?;
    let (coords, logits) = split_outputs(&out, net.data_dim);
    GuessBatch::new(coords, logits)
}

/// Draws `k` noise vectors and returns the resulting guesses.
pub fn generate_guesses(net: &EvlNet, rng: &mut Rng, k: usize) -> Result<GuessBatch> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let noise = net.draw_noise(k, rng);
    guesses_from_noise(net, &noise)
}

/// On-disk form of a trained network: JSON holding the architecture, the
/// training recipe, and every weight in shortest round-trip float notation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvlCheckpoint {
    pub format: String,
    pub net: EvlNet,
    pub train_config: TrainConfig,
    /// Free-form provenance, typically the serialized run configuration.
    #[serde(default)]
    pub run_config: serde_json::Value,
}

pub const CHECKPOINT_FORMAT: &str = "evl-checkpoint-v1";

impl EvlCheckpoint {
    pub fn new(net: EvlNet, train_config: TrainConfig, run_config: serde_json::Value) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            net,
            train_config,
            run_config,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: EvlCheckpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidArgument(format!(
                "{}: unsupported checkpoint format {:?}",
                path.display(),
                ckpt.format
            )));
        }
        // re-validate layer chaining and the output width
        let trunk = MlpParams::new(ckpt.net.trunk.layers().to_vec())?;
        let net = EvlNet::from_trunk(trunk, ckpt.net.data_dim)?;
        Ok(Self { net, ..ckpt })
    }
}
