//! Reference models: a full-covariance Gaussian mixture fit by EM, and the
//! training-set histogram used directly as a distribution.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{histogram, GridSpec, HistogramGrid};
use crate::numcore::{Matrix, Rng};

const GMM_FORMAT: &str = "gmm-checkpoint-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    pub components: usize,
    pub max_iter: usize,
    /// Stop once the mean log-likelihood improves by less than this.
    pub tol: f64,
    /// Added to every covariance diagonal.
    pub reg: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            components: 10,
            max_iter: 100,
            tol: 1e-3,
            reg: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    /// One mean per row.
    pub means: Matrix,
    pub covariances: Vec<Matrix>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Matrix, covariances: Vec<Matrix>) -> Result<Self> {
        let k = weights.len();
        let d = means.cols();
        if k == 0 || means.rows() != k || covariances.len() != k {
            return Err(Error::shape("GmmModel::new", k, format!("{} means, {} covariances", means.rows(), covariances.len())));
        }
        if covariances.iter().any(|c| c.shape() != (d, d)) {
            return Err(Error::shape("GmmModel::new (covariance)", format!("{d}x{d}"), "other"));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("mixture weights must lie on the simplex (sum {total})")));
        }
        for c in &covariances {
            c.cholesky()?;
        }
        Ok(Self {
            weights,
            means,
            covariances,
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    /// Mean log-density of `data` under the mixture.
    pub fn mean_log_likelihood(&self, data: &Matrix) -> Result<f64> {
        let (ll, _) = e_step(self, data)?;
        Ok(ll)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let doc = serde_json::json!({ "format": GMM_FORMAT, "model": self });
        let text = serde_json::to_string_pretty(&doc)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            format: String,
            model: GmmModel,
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Doc = serde_json::from_str(&text)?;
        if doc.format != GMM_FORMAT {
            return Err(Error::InvalidArgument(format!("not a GMM checkpoint: {}", doc.format)));
        }
        let m = doc.model;
        Self::new(m.weights, m.means, m.covariances)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Mean log-likelihood of the initial model and after every M-step.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

impl GmmFit {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood.last().expect("history holds the initial value")
    }
}

/// Per-component Cholesky factor and log normalizer.
struct Factor {
    chol: Matrix,
    log_norm: f64,
}

fn factor(cov: &Matrix) -> Result<Factor> {
    let chol = cov.cholesky()?;
    let d = cov.rows();
    let log_det: f64 = (0..d).map(|i| chol.get(i, i).ln()).sum::<f64>() * 2.0;
    Ok(Factor {
        chol,
        log_norm: -0.5 * (d as f64 * (2.0 * PI).ln() + log_det),
    })
}

/// `||L^-1 (x - mu)||^2` by forward substitution.
fn mahalanobis(chol: &Matrix, mean: &[f64], x: &[f64], scratch: &mut [f64]) -> f64 {
    let d = mean.len();
    let mut sq = 0.0;
    for i in 0..d {
        let mut v = x[i] - mean[i];
        for j in 0..i {
            v -= chol.get(i, j) * scratch[j];
        }
        v /= chol.get(i, i);
        scratch[i] = v;
        sq += v * v;
    }
    sq
}

/// Mean log-likelihood and the n x k responsibility matrix.
fn e_step(model: &GmmModel, data: &Matrix) -> Result<(f64, Matrix)> {
    let k = model.components();
    let d = model.dim();
    if data.cols() != d {
        return Err(Error::shape("gmm", d, data.cols()));
    }
    let factors = model.covariances.iter().map(factor).collect::<Result<Vec<_>>>()?;
    let log_w: Vec<f64> = model.weights.iter().map(|w| w.ln()).collect();
    let mut resp = Matrix::zeros(data.rows(), k);
    let mut scratch = vec![0.0; d];
    let mut total = 0.0;
    for (i, x) in data.iter_rows().enumerate() {
        let row = resp.row_mut(i);
        for c in 0..k {
            let m = mahalanobis(&factors[c].chol, model.means.row(c), x, &mut scratch);
            row[c] = log_w[c] + factors[c].log_norm - 0.5 * m;
        }
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - top).exp()).sum();
        let lse = top + sum.ln();
        for v in row.iter_mut() {
            *v = (*v - lse).exp();
        }
        total += lse;
    }
    Ok((total / data.rows() as f64, resp))
}

/// Components with no responsibility mass keep their mean from `prev_means`.
fn m_step(data: &Matrix, resp: &Matrix, reg: f64, prev_means: &Matrix) -> Result<GmmModel> {
    let (n, d) = data.shape();
    let k = resp.cols();
    let mut raw = vec![0.0; k];
    let mut means = Matrix::zeros(k, d);
    for (x, r) in data.iter_rows().zip(resp.iter_rows()) {
        for c in 0..k {
            raw[c] += r[c];
            for (m, xv) in means.row_mut(c).iter_mut().zip(x) {
                *m += r[c] * xv;
            }
        }
    }
    for c in 0..k {
        if raw[c] > 0.0 {
            means.row_mut(c).iter_mut().for_each(|m| *m /= raw[c]);
        } else {
            means.row_mut(c).copy_from_slice(prev_means.row(c));
        }
    }
    let nk: Vec<f64> = raw.iter().map(|r| r + 10.0 * f64::EPSILON).collect();
    let mut covs = vec![Matrix::zeros(d, d); k];
    let mut diff = vec![0.0; d];
    for (x, r) in data.iter_rows().zip(resp.iter_rows()) {
        for c in 0..k {
            if r[c] == 0.0 {
                continue;
            }
            for ((dv, xv), mv) in diff.iter_mut().zip(x).zip(means.row(c)) {
                *dv = xv - mv;
            }
            let cov = covs[c].data_mut();
            for a in 0..d {
                let ra = r[c] * diff[a];
                for b in 0..=a {
                    cov[a * d + b] += ra * diff[b];
                }
            }
        }
    }
    for (c, cov) in covs.iter_mut().enumerate() {
        for a in 0..d {
            for b in 0..=a {
                let v = cov.get(a, b) / nk[c];
                cov.set(a, b, v);
                cov.set(b, a, v);
            }
            cov.set(a, a, cov.get(a, a) + reg);
        }
    }
    let total: f64 = nk.iter().sum();
    let weights = nk.iter().map(|v| v / total).collect();
    debug_assert!((total - n as f64).abs() < 1e-6 * n as f64);
    GmmModel::new(weights, means, covs)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

const LLOYD_ITERS: usize = 25;

fn nearest_center(x: &[f64], centers: &Matrix) -> usize {
    (0..centers.rows())
        .min_by(|&a, &b| sq_dist(x, centers.row(a)).total_cmp(&sq_dist(x, centers.row(b))))
        .expect("at least one center")
}

/// k-means++ seeds refined by Lloyd iterations, uniform weights, and one shared
/// covariance pooled from the scatter around each point's final center.
fn initial_model(data: &Matrix, k: usize, reg: f64, rng: &mut Rng) -> Result<GmmModel> {
    let (n, d) = data.shape();
    let mut seeds = vec![rng.below(n)];
    let mut nearest: Vec<f64> = data.iter_rows().map(|x| sq_dist(x, data.row(seeds[0]))).collect();
    while seeds.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 { rng.categorical(&nearest) } else { rng.below(n) };
        seeds.push(next);
        for (i, x) in data.iter_rows().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(x, data.row(next)));
        }
    }
    let mut centers = data.select_rows(&seeds);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..LLOYD_ITERS {
        let mut moved = false;
        for (label, x) in labels.iter_mut().zip(data.iter_rows()) {
            let c = nearest_center(x, &centers);
            moved |= *label != c;
            *label = c;
        }
        if !moved {
            break;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (&c, x) in labels.iter().zip(data.iter_rows()) {
            counts[c] += 1;
            sums.row_mut(c).iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        for c in (0..k).filter(|&c| counts[c] > 0) {
            let row = centers.row_mut(c);
            row.iter_mut().zip(sums.row(c)).for_each(|(m, s)| *m = s / counts[c] as f64);
        }
    }
    let mut pooled = Matrix::zeros(d, d);
    for x in data.iter_rows() {
        let center = centers.row(nearest_center(x, &centers));
        let diff: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
        for a in 0..d {
            for b in 0..d {
                pooled.set(a, b, pooled.get(a, b) + diff[a] * diff[b]);
            }
        }
    }
    pooled.scale(1.0 / n as f64);
    for a in 0..d {
        pooled.set(a, a, pooled.get(a, a) + reg);
    }
    GmmModel::new(vec![1.0 / k as f64; k], centers, vec![pooled; k])
}

/// Fits a `cfg.components`-component full-covariance mixture to `data` with EM.
pub fn gmm_fit(data: &Matrix, cfg: &GmmConfig, rng: &mut Rng) -> Result<GmmFit> {
    let k = cfg.components;
    if k == 0 || cfg.max_iter == 0 || !(cfg.reg > 0.0) || !(cfg.tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("bad GMM config {cfg:?}")));
    }
    if data.rows() < k {
        return Err(Error::InvalidArgument(format!("{} points cannot fit {k} components", data.rows())));
    }
    let mut model = initial_model(data, k, cfg.reg, rng)?;
    let (mut ll, mut resp) = e_step(&model, data)?;
    let mut history = vec![ll];
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        model = m_step(data, &resp, cfg.reg, &model.means)?;
        let (next_ll, next_resp) = e_step(&model, data)?;
        history.push(next_ll);
        resp = next_resp;
        let gain = next_ll - ll;
        ll = next_ll;
        if gain.abs() < cfg.tol {
            converged = true;
            break;
        }
    }
    log::debug!("gmm: {} iterations, mean log-likelihood {ll:.6}", history.len() - 1);
    Ok(GmmFit {
        model,
        log_likelihood: history,
        converged,
    })
}

/// Draws `n` points: a component by weight, then its Gaussian via the Cholesky factor.
pub fn gmm_sample(model: &GmmModel, rng: &mut Rng, n: usize) -> Result<Matrix> {
    let d = model.dim();
    let chols = model.covariances.iter().map(|c| c.cholesky()).collect::<Result<Vec<_>>>()?;
    let mut out = Matrix::zeros(n, d);
    let mut z = vec![0.0; d];
    for i in 0..n {
        let c = rng.categorical(&model.weights);
        z.iter_mut().for_each(|v| *v = rng.normal());
        let mean = model.means.row(c);
        let row = out.row_mut(i);
        for a in 0..d {
            row[a] = mean[a] + (0..=a).map(|b| chols[c].get(a, b) * z[b]).sum::<f64>();
        }
    }
    Ok(out)
}

/// The training-set histogram, used as the model distribution itself.
pub fn empirical_model(train: &Matrix, grid: &GridSpec) -> Result<HistogramGrid> {
    histogram(train, grid)
}
