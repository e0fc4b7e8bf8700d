use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{orthogonal_init, Matrix, Rng, Transpose};

/// One affine map `x W + b`; `weights` is `in x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }
}

/// Dense network: ReLU after every layer except the last, which is linear.
///
/// The same type doubles as the container for gradients and optimizer
/// accumulators, which always share the parameter shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

/// Activations saved by [`MlpParams::forward`]: the input of every layer.
///
/// For hidden layers these are post-ReLU values, so the ReLU mask is
/// recovered as `input > 0`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layer_inputs: Vec<Matrix>,
}

impl ForwardCache {
    pub fn layer_inputs(&self) -> &[Matrix] {
        &self.layer_inputs
    }

    /// Hash of the ReLU on/off pattern of every hidden unit for every row.
    pub fn activation_fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for x in self.layer_inputs.iter().skip(1) {
            for chunk in x.data().chunks(64) {
                let mut bits = 0u64;
                for (i, v) in chunk.iter().enumerate() {
                    if *v > 0.0 {
                        bits |= 1 << i;
                    }
                }
                bits.hash(&mut h);
            }
        }
        h.finish()
    }
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::shape(
                    "MlpParams::new",
                    format!("bias of length {} in layer {i}", layer.out_dim()),
                    layer.bias.len(),
                ));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(
                    "MlpParams::new",
                    format!("layer {} input dim {}", i + 1, pair[0].out_dim()),
                    pair[1].in_dim(),
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Orthogonal weights, zero biases. Layers feeding a ReLU get gain
    /// `sqrt(2)`, the final linear layer gain 1.
    pub fn init_orthogonal(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer dims must have at least two nonzero entries, got {dims:?}"
            )));
        }
        let n_layers = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i + 1 < n_layers { 2f64.sqrt() } else { 1.0 };
                Layer {
                    weights: orthogonal_init(w[0], w[1], gain, rng),
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        Self::new(layers)
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Matrix::zeros(l.in_dim(), l.out_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.dims() == other.dims()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    /// All parameters in a fixed order: per layer, weights then bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data().iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.data_mut().iter_mut().chain(l.bias.iter_mut()))
    }

    fn locate(&self, mut index: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            let nw = l.weights.data().len();
            if index < nw {
                return (li, true, index);
            }
            index -= nw;
            if index < l.bias.len() {
                return (li, false, index);
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameter at flat position `index` (same order as [`values`](Self::values)).
    pub fn param(&self, index: usize) -> f64 {
        let (li, is_weight, i) = self.locate(index);
        let l = &self.layers[li];
        if is_weight {
            l.weights.data()[i]
        } else {
            l.bias[i]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (li, is_weight, i) = self.locate(index);
        let l = &mut self.layers[li];
        if is_weight {
            l.weights.data_mut()[i] = value;
        } else {
            l.bias[i] = value;
        }
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::shape("forward", self.input_dim(), input.cols()));
        }
        Ok(())
    }

    fn affine(layer: &Layer, x: &Matrix, relu: bool) -> Matrix {
        let mut z = Matrix::zeros(x.rows(), layer.out_dim());
        for r in 0..z.rows() {
            z.row_mut(r).copy_from_slice(&layer.bias);
        }
        Matrix::gemm(1.0, x, Transpose::No, &layer.weights, Transpose::No, 1.0, &mut z)
            .expect("layer dims checked at construction");
        if relu {
            z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        }
        z
    }

    /// Forward pass over a `batch x in` input.
    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(input)?;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let next = Self::affine(layer, &x, i < last);
            layer_inputs.push(x);
            x = next;
        }
        Ok((x, ForwardCache { layer_inputs }))
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut x = Self::affine(&self.layers[0], input, last > 0);
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            x = Self::affine(layer, &x, i < last);
        }
        Ok(x)
    }

    /// Reverse-mode gradients of a scalar loss given `dLoss/dOutput`.
    ///
    /// The ReLU derivative at exactly zero is taken as 0.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Matrix) -> Result<MlpParams> {
        if cache.layer_inputs.len() != self.layers.len() {
            return Err(Error::StaleCache(format!(
                "{} cached layers for a {}-layer network",
                cache.layer_inputs.len(),
                self.layers.len()
            )));
        }
        let batch = cache.layer_inputs[0].rows();
        for (i, (x, l)) in cache.layer_inputs.iter().zip(&self.layers).enumerate() {
            if x.cols() != l.in_dim() || x.rows() != batch {
                return Err(Error::StaleCache(format!(
                    "layer {i} expects {batch}x{}, cache holds {}x{}",
                    l.in_dim(),
                    x.rows(),
                    x.cols()
                )));
            }
        }
        if output_grad.shape() != (batch, self.output_dim()) {
            return Err(Error::shape(
                "backward",
                format!("{batch}x{} output gradient", self.output_dim()),
                format!("{}x{}", output_grad.rows(), output_grad.cols()),
            ));
        }

        let mut grads = self.zeros_like();
        let mut delta = output_grad.clone();
        for li in (0..self.layers.len()).rev() {
            let x = &cache.layer_inputs[li];
            let g = &mut grads.layers[li];
            Matrix::gemm(1.0, x, Transpose::Yes, &delta, Transpose::No, 0.0, &mut g.weights)?;
            for row in delta.iter_rows() {
                g.bias.iter_mut().zip(row).for_each(|(b, d)| *b += d);
            }
            if li > 0 {
                let layer = &self.layers[li];
                let mut dx = Matrix::zeros(batch, layer.in_dim());
                Matrix::gemm(1.0, &delta, Transpose::No, &layer.weights, Transpose::Yes, 0.0, &mut dx)?;
                dx.data_mut()
                    .iter_mut()
                    .zip(x.data())
                    .for_each(|(d, &a)| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                delta = dx;
            }
        }
        Ok(grads)
    }

    /// Writes the parameters as JSON. Floats use shortest round-trip
    /// formatting, so [`load_json`](Self::load_json) restores them bit for bit.
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: MlpParams = serde_json::from_str(&text)?;
        Self::new(raw.layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(w: &[&[f64]], b: &[f64]) -> Layer {
        Layer {
            weights: Matrix::from_rows(w).unwrap(),
            bias: b.to_vec(),
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpParams::init_orthogonal(&[3, 8, 8, 2], &mut Rng::new(0))
            .unwrap()
            .zeros_like();
        let input = Matrix::new(4, 3, Rng::new(1).gaussian_vec(12)).unwrap();
        let (out, _) = net.forward(&input).unwrap();
        assert_eq!(out, Matrix::zeros(4, 2));
    }

    #[test]
    fn identity_single_layer() {
        let net = MlpParams::new(vec![layer(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0])]).unwrap();
        let input = Matrix::from_rows(&[[1.5, -2.0], [0.0, 3.0]]).unwrap();
        assert_eq!(net.forward(&input).unwrap().0, input);
        assert_eq!(net.predict(&input).unwrap(), input);
    }

    #[test]
    fn relu_kills_negative() {
        let net = MlpParams::new(vec![layer(&[&[1.0]], &[0.0]), layer(&[&[3.0]], &[0.7])]).unwrap();
        let out = net.forward(&Matrix::from_rows(&[[-1.0]]).unwrap()).unwrap().0;
        assert_eq!(out.get(0, 0), 0.7);
    }

    #[test]
    fn mismatched_chain_rejected() {
        let err = MlpParams::new(vec![layer(&[&[1.0, 1.0]], &[0.0, 0.0]), layer(&[&[1.0]], &[0.0])]);
        assert!(err.is_err());
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let net = MlpParams::init_orthogonal(&[3, 4, 1], &mut Rng::new(0)).unwrap();
        assert!(net.forward(&Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let net = MlpParams::init_orthogonal(&[3, 8, 2], &mut Rng::new(0)).unwrap();
        let input = Matrix::new(5, 3, Rng::new(2).gaussian_vec(15)).unwrap();
        let (_, cache) = net.forward(&input).unwrap();
        let g = net.backward(&cache, &Matrix::zeros(5, 2)).unwrap();
        assert!(g.values().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_sum_loss_gradient() {
        // loss = sum of outputs of an identity layer: dW[i][j] = sum_rows x[r][i], db = batch.
        let net = MlpParams::new(vec![layer(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0])]).unwrap();
        let input = Matrix::from_rows(&[[2.0, -1.0]]).unwrap();
        let (_, cache) = net.forward(&input).unwrap();
        let g = net.backward(&cache, &Matrix::from_rows(&[[1.0, 1.0]]).unwrap()).unwrap();
        let w = &g.layers()[0].weights;
        assert_eq!(w.data(), &[2.0, 2.0, -1.0, -1.0]);
        assert_eq!(g.layers()[0].bias, vec![1.0, 1.0]);
    }

    #[test]
    fn stale_cache_detected() {
        let a = MlpParams::init_orthogonal(&[3, 8, 2], &mut Rng::new(0)).unwrap();
        let b = MlpParams::init_orthogonal(&[3, 6, 2], &mut Rng::new(0)).unwrap();
        let (_, cache) = a.forward(&Matrix::zeros(2, 3)).unwrap();
        assert!(matches!(b.backward(&cache, &Matrix::zeros(2, 2)), Err(Error::StaleCache(_))));
    }

    #[test]
    fn flat_parameter_access() {
        let mut net = MlpParams::init_orthogonal(&[2, 3, 1], &mut Rng::new(0)).unwrap();
        assert_eq!(net.param_count(), 2 * 3 + 3 + 3 + 1);
        let flat: Vec<f64> = net.values().copied().collect();
        for (i, v) in flat.iter().enumerate() {
            assert_eq!(net.param(i), *v);
        }
        net.set_param(9, 4.5);
        assert_eq!(net.layers()[1].weights.data()[0], 4.5);
        net.set_param(12, -1.0);
        assert_eq!(net.layers()[1].bias[0], -1.0);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = MlpParams::init_orthogonal(&[16, 32, 32, 3], &mut Rng::new(8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.save_json(&path).unwrap();
        let back = MlpParams::load_json(&path).unwrap();
        let a: Vec<u64> = net.values().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.values().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(back.dims(), vec![16, 32, 32, 3]);
    }
}
