//! Experiment plumbing: run configurations, single-cell evaluation, and the
//! suites that sweep models, datasets and seeds into a results CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{empirical_model, gmm_fit, gmm_sample, GmmConfig, GmmModel};
use crate::datasets::{make_gaussian_mixture, make_swiss_roll, Dataset, Split};
use crate::error::{Error, Result};
use crate::evl::{rejection_sample_batched, train, EvlCheckpoint, EvlNet, TrainHistory};
use crate::metrics::{
    fisher_metric_with, histogram, kl_divergence, FisherForm, GridSpec, HistogramGrid, KL_REGULARIZATION,
};
use crate::neuralnet::TrainConfig;
use crate::numcore::{Matrix, Rng};

/// Environment variable holding the suite worker count.
pub const WORKERS_ENV: &str = "EVL_WORKERS";

/// Dropped-sample fraction above which an evaluation logs a warning.
pub const DROP_WARN_FRACTION: f64 = 0.01;

const CSV_HEADER: &str = "model,dataset,dim,modes,seed,train_size,kl,fisher,binning,config_hash,seconds";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Empirical,
    Gmm,
    Evl,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Empirical, ModelKind::Gmm, ModelKind::Evl];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Empirical => "empirical",
            ModelKind::Gmm => "gmm",
            ModelKind::Evl => "evl",
        }
    }

    fn stream(self) -> u64 {
        match self {
            ModelKind::Empirical => 100,
            ModelKind::Gmm => 101,
            ModelKind::Evl => 102,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Gaussians { dim: usize, modes: usize },
    SwissRoll { noise: f64, scale: f64 },
}

impl DatasetSpec {
    pub fn swiss_roll() -> Self {
        DatasetSpec::SwissRoll { noise: 0.1, scale: 0.5 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::Gaussians { .. } => "gaussians",
            DatasetSpec::SwissRoll { .. } => "swissroll",
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            DatasetSpec::Gaussians { dim, .. } => dim,
            DatasetSpec::SwissRoll { .. } => 3,
        }
    }

    pub fn modes(&self) -> Option<usize> {
        match *self {
            DatasetSpec::Gaussians { modes, .. } => Some(modes),
            DatasetSpec::SwissRoll { .. } => None,
        }
    }

    pub fn generate(&self, seed: u64, n: usize, split: Split) -> Result<Dataset> {
        match *self {
            DatasetSpec::Gaussians { dim, modes } => make_gaussian_mixture(dim, modes, seed, n, split),
            DatasetSpec::SwissRoll { noise, scale } => make_swiss_roll(n, noise, scale, seed, split),
        }
    }

    /// Evaluation grid: fixed ranges for the mixtures, test-set extent for the roll.
    pub fn grid(&self, test: &Matrix) -> Result<GridSpec> {
        match *self {
            DatasetSpec::Gaussians { dim, .. } => GridSpec::for_gaussians(dim),
            DatasetSpec::SwissRoll { .. } => GridSpec::from_extent(test, 32, 0.01),
        }
    }
}

/// Grid for a loaded test set: extent-based for swiss-roll files, fixed otherwise.
pub fn grid_for_dataset(test: &Dataset) -> Result<GridSpec> {
    match test.generator() {
        Some("swiss_roll") => GridSpec::from_extent(&test.points, 32, 0.01),
        _ => GridSpec::for_gaussians(test.dim()),
    }
}

/// Everything that determines one (model, dataset, seed) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelKind,
    pub dataset: DatasetSpec,
    /// Seeds the dataset and, through a derived stream, the model.
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub eval_samples: usize,
    /// Guess batch size when sampling; the training value when unset.
    pub eval_guesses: Option<usize>,
    /// Categorical draws kept from each guess batch when sampling.
    pub draws_per_batch: usize,
    pub fisher_form: FisherForm,
    pub train: TrainConfig,
    pub gmm: GmmConfig,
    /// Where histogram and sample dumps go, if anywhere.
    pub dump_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Evl,
            dataset: DatasetSpec::Gaussians { dim: 1, modes: 1 },
            seed: 1,
            train_size: 50_000,
            test_size: 400_000,
            eval_samples: 400_000,
            eval_guesses: None,
            draws_per_batch: 128,
            fisher_form: FisherForm::Angle,
            train: TrainConfig::default(),
            gmm: GmmConfig::default(),
            dump_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// First 16 hex digits of the SHA-256 of the config's JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn sampling_guesses(&self) -> usize {
        self.eval_guesses.unwrap_or(self.train.guesses)
    }

    fn model_rng(&self) -> Rng {
        Rng::new(self.seed).child(self.model.stream())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub kl: f64,
    pub fisher: f64,
    pub binning: String,
    pub model_dropped: f64,
    pub test_dropped: f64,
}

/// KL (model || test) and Fisher distance between two histograms.
pub fn compare_histograms(model: &HistogramGrid, test: &HistogramGrid, form: FisherForm) -> Result<EvalReport> {
    for (who, h) in [("model", model), ("test", test)] {
        if h.dropped_fraction() > DROP_WARN_FRACTION {
            log::warn!(
                "{who}: {:.2}% of samples fell outside the histogram range",
                100.0 * h.dropped_fraction()
            );
        }
    }
    Ok(EvalReport {
        kl: kl_divergence(model, test, KL_REGULARIZATION)?,
        fisher: fisher_metric_with(model, test, form)?,
        binning: model.spec.to_string(),
        model_dropped: model.dropped_fraction(),
        test_dropped: test.dropped_fraction(),
    })
}

/// A trained model of any kind.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Empirical(Matrix),
    Gmm(GmmModel),
    Evl(EvlNet),
}

impl FittedModel {
    /// Histogram of the model distribution on `grid`. The empirical model is
    /// its own histogram; the others are sampled `cfg.eval_samples` times.
    pub fn histogram(&self, cfg: &RunConfig, grid: &GridSpec, rng: &mut Rng) -> Result<(HistogramGrid, Option<Matrix>)> {
        let samples = match self {
            FittedModel::Empirical(train) => return Ok((empirical_model(train, grid)?, None)),
            FittedModel::Gmm(m) => gmm_sample(m, rng, cfg.eval_samples)?,
            FittedModel::Evl(net) => {
                rejection_sample_batched(net, rng, cfg.eval_samples, cfg.sampling_guesses(), cfg.draws_per_batch)?
            }
        };
        Ok((histogram(&samples, grid)?, Some(samples)))
    }
}

/// Fits the configured model to `train`; EVL also returns its loss history.
pub fn fit_model(cfg: &RunConfig, train_set: &Dataset) -> Result<(FittedModel, Option<TrainHistory>)> {
    let rng = cfg.model_rng();
    match cfg.model {
        ModelKind::Empirical => Ok((FittedModel::Empirical(train_set.points.clone()), None)),
        ModelKind::Gmm => {
            let fit = gmm_fit(&train_set.points, &cfg.gmm, &mut rng.child(0))?;
            Ok((FittedModel::Gmm(fit.model), None))
        }
        ModelKind::Evl => {
            let mut net = EvlNet::new(train_set.dim(), &cfg.train, &mut rng.child(0))?;
            let history = train(&mut net, train_set, &cfg.train, &mut rng.child(1))?;
            Ok((FittedModel::Evl(net), Some(history)))
        }
    }
}

/// Evaluates a fitted model against `test` on `grid`.
pub fn evaluate_model(model: &FittedModel, cfg: &RunConfig, test: &Matrix, grid: &GridSpec) -> Result<(EvalReport, Option<Matrix>)> {
    let mut rng = cfg.model_rng().child(2);
    let (model_hist, samples) = model.histogram(cfg, grid, &mut rng)?;
    let test_hist = histogram(test, grid)?;
    let report = compare_histograms(&model_hist, &test_hist, cfg.fisher_form)?;
    if let Some(dir) = &cfg.dump_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stem = cell_stem(cfg);
        model_hist.write_dump(&dir.join(format!("{stem}-model.hist")))?;
        test_hist.write_dump(&dir.join(format!("{stem}-test.hist")))?;
        if let Some(s) = &samples {
            let meta = BTreeMap::from([
                ("model".to_string(), cfg.model.name().to_string()),
                ("dataset".to_string(), cfg.dataset.name().to_string()),
                ("seed".to_string(), cfg.seed.to_string()),
            ]);
            Dataset::new(s.clone(), meta)?.save(&dir.join(format!("{stem}-samples.txt")))?;
        }
    }
    Ok((report, samples))
}

fn cell_stem(cfg: &RunConfig) -> String {
    let data = match cfg.dataset {
        DatasetSpec::Gaussians { dim, modes } => format!("gaussians-d{dim}-n{modes}"),
        DatasetSpec::SwissRoll { .. } => "swissroll".to_string(),
    };
    format!("{}-{data}-t{}-s{}", cfg.model, cfg.train_size, cfg.seed)
}

/// One results row; failed cells carry NaN metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub model: ModelKind,
    pub dataset: String,
    pub dim: usize,
    pub modes: Option<usize>,
    pub seed: u64,
    pub train_size: usize,
    pub kl: f64,
    pub fisher: f64,
    pub binning: String,
    pub config_hash: String,
    pub seconds: f64,
}

impl SuiteRow {
    pub fn succeeded(&self) -> bool {
        self.kl.is_finite() && self.fisher.is_finite()
    }
}

/// Generates data, fits, and evaluates one cell.
pub fn run_cell(cfg: &RunConfig) -> Result<SuiteRow> {
    let start = Instant::now();
    let train_set = cfg.dataset.generate(cfg.seed, cfg.train_size, Split::Train)?;
    let test_set = cfg.dataset.generate(cfg.seed, cfg.test_size, Split::Test)?;
    let grid = cfg.dataset.grid(&test_set.points)?;
    let (model, _) = fit_model(cfg, &train_set)?;
    let (report, _) = evaluate_model(&model, cfg, &test_set.points, &grid)?;
    Ok(SuiteRow {
        seconds: start.elapsed().as_secs_f64(),
        kl: report.kl,
        fisher: report.fisher,
        binning: report.binning,
        ..row_skeleton(cfg)
    })
}

fn row_skeleton(cfg: &RunConfig) -> SuiteRow {
    SuiteRow {
        model: cfg.model,
        dataset: cfg.dataset.name().to_string(),
        dim: cfg.dataset.dim(),
        modes: cfg.dataset.modes(),
        seed: cfg.seed,
        train_size: cfg.train_size,
        kl: f64::NAN,
        fisher: f64::NAN,
        binning: String::new(),
        config_hash: cfg.config_hash(),
        seconds: 0.0,
    }
}

/// A sweep over models x datasets x seeds sharing one base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub models: Vec<ModelKind>,
    pub datasets: Vec<DatasetSpec>,
    pub seeds: Vec<u64>,
    pub base: RunConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self::gaussians(&[1, 2, 3, 4], &[1, 2, 4, 10])
    }
}

impl SuiteConfig {
    pub fn gaussians(dims: &[usize], modes: &[usize]) -> Self {
        let datasets = dims
            .iter()
            .flat_map(|&dim| modes.iter().map(move |&modes| DatasetSpec::Gaussians { dim, modes }))
            .collect();
        Self {
            models: ModelKind::ALL.to_vec(),
            datasets,
            seeds: (1..=5).collect(),
            base: RunConfig::default(),
        }
    }

    pub fn swiss_roll() -> Self {
        Self {
            datasets: vec![DatasetSpec::swiss_roll()],
            ..Self::gaussians(&[], &[])
        }
    }

    /// One seed, 10 epochs, 1-d and 2-d mixtures.
    pub fn ci() -> Self {
        let mut s = Self::gaussians(&[1, 2], &[1, 2, 4, 10]);
        s.seeds = vec![1];
        s.base.train.epochs = 10;
        s
    }

    /// Cell configs in row order: dataset, then model, then seed.
    pub fn cells(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for ds in &self.datasets {
            for &model in &self.models {
                for &seed in &self.seeds {
                    out.push(RunConfig {
                        model,
                        dataset: *ds,
                        seed,
                        ..self.base.clone()
                    });
                }
            }
        }
        out
    }
}

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every cell on a pool of `workers` threads. Rows come back in
/// [`SuiteConfig::cells`] order; a failing cell yields a NaN row and a log line.
pub fn run_suite(suite: &SuiteConfig, workers: usize) -> Result<Vec<SuiteRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let cells = suite.cells();
    let rows = pool.install(|| {
        cells
            .par_iter()
            .map(|cfg| {
                run_cell(cfg).unwrap_or_else(|e| {
                    log::error!("{} failed: {e}", cell_stem(cfg));
                    row_skeleton(cfg)
                })
            })
            .collect()
    });
    Ok(rows)
}

pub fn write_rows(path: &Path, rows: &[SuiteRow], append: bool) -> Result<()> {
    let exists = path.exists() && std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
    let file = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(!(append && exists)).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<SuiteRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("unexpected header {:?}", header.join(",")),
        });
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Mean and sample standard deviation of one metric over a cell's seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: ModelKind,
    pub dataset: String,
    pub dim: usize,
    pub modes: Option<usize>,
    pub train_size: usize,
    /// Successful seeds aggregated.
    pub runs: usize,
    pub failed: usize,
    pub kl_mean: f64,
    pub kl_std: f64,
    pub fisher_mean: f64,
    pub fisher_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups rows by everything but the seed, in first-appearance order.
pub fn summarize(rows: &[SuiteRow]) -> Vec<SummaryRow> {
    type Key = (ModelKind, String, usize, Option<usize>, usize);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: BTreeMap<Key, Vec<&SuiteRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.model, r.dataset.clone(), r.dim, r.modes, r.train_size);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let members = &groups[&key];
            let ok: Vec<&&SuiteRow> = members.iter().filter(|r| r.succeeded()).collect();
            let kl: Vec<f64> = ok.iter().map(|r| r.kl).collect();
            let fisher: Vec<f64> = ok.iter().map(|r| r.fisher).collect();
            let (kl_mean, kl_std) = mean_std(&kl);
            let (fisher_mean, fisher_std) = mean_std(&fisher);
            let (model, dataset, dim, modes, train_size) = key;
            SummaryRow {
                model,
                dataset,
                dim,
                modes,
                train_size,
                runs: ok.len(),
                failed: members.len() - ok.len(),
                kl_mean,
                kl_std,
                fisher_mean,
                fisher_std,
            }
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Saves a trained EVL net with the run configuration embedded.
pub fn save_evl_checkpoint(net: &EvlNet, cfg: &RunConfig, path: &Path) -> Result<()> {
    let run = serde_json::to_value(cfg)?;
    EvlCheckpoint::new(net.clone(), cfg.train.clone(), run).save(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg(model: ModelKind) -> RunConfig {
        RunConfig {
            model,
            dataset: DatasetSpec::Gaussians { dim: 1, modes: 1 },
            train_size: 2000,
            test_size: 20_000,
            eval_samples: 20_000,
            train: TrainConfig {
                hidden_width: 16,
                hidden_layers: 2,
                noise_dim: 4,
                guesses: 16,
                epochs: 2,
                ..TrainConfig::default()
            },
            gmm: GmmConfig { components: 2, ..Default::default() },
            ..RunConfig::default()
        }
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        assert_eq!(a.config_hash(), RunConfig::default().config_hash());
        assert_eq!(a.config_hash().len(), 16);
        let b = RunConfig { seed: 2, ..RunConfig::default() };
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let cfg = quick_cfg(ModelKind::Gmm);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let partial: RunConfig = serde_json::from_str(r#"{"model":"gmm","seed":4}"#).unwrap();
        assert_eq!(partial.seed, 4);
        assert_eq!(partial.model, ModelKind::Gmm);
        assert_eq!(partial.eval_samples, 400_000);
        let roll: DatasetSpec = serde_json::from_str(r#"{"kind":"swiss_roll","noise":0.1,"scale":0.5}"#).unwrap();
        assert_eq!(roll, DatasetSpec::swiss_roll());
    }

    #[test]
    fn model_against_its_own_samples_is_zero() {
        let grid = GridSpec::for_gaussians(1).unwrap();
        let data = make_gaussian_mixture(1, 2, 3, 10_000, Split::Test).unwrap();
        let h = histogram(&data.points, &grid).unwrap();
        let r = compare_histograms(&h, &h, FisherForm::Angle).unwrap();
        assert!(r.kl.abs() < 1e-12);
        assert!(r.fisher.abs() < 1e-6);
    }

    #[test]
    fn empirical_cell_row() {
        let row = run_cell(&quick_cfg(ModelKind::Empirical)).unwrap();
        assert!(row.succeeded());
        assert!(row.kl >= 0.0 && (0.0..=std::f64::consts::PI).contains(&row.fisher));
        assert_eq!(row.binning, "[-9:9]x128");
        assert_eq!(row.modes, Some(1));
    }

    #[test]
    fn suite_rows_are_ordered_and_deterministic() {
        let suite = SuiteConfig {
            models: vec![ModelKind::Empirical, ModelKind::Gmm, ModelKind::Evl],
            datasets: vec![DatasetSpec::Gaussians { dim: 1, modes: 2 }],
            seeds: vec![1, 2],
            base: quick_cfg(ModelKind::Evl),
        };
        let a = run_suite(&suite, 2).unwrap();
        let b = run_suite(&suite, 1).unwrap();
        assert_eq!(a.len(), 6);
        let key = |r: &SuiteRow| (r.model, r.seed, r.kl.to_bits(), r.fisher.to_bits());
        assert_eq!(a.iter().map(key).collect::<Vec<_>>(), b.iter().map(key).collect::<Vec<_>>());
        assert_eq!(a[0].model, ModelKind::Empirical);
        assert_eq!(a[5].model, ModelKind::Evl);
        assert_eq!(a[5].seed, 2);
    }

    #[test]
    fn failed_cells_become_nan_rows() {
        let mut base = quick_cfg(ModelKind::Gmm);
        base.train_size = 1; // fewer points than components
        let suite = SuiteConfig {
            models: vec![ModelKind::Gmm],
            datasets: vec![DatasetSpec::Gaussians { dim: 1, modes: 1 }],
            seeds: vec![1],
            base,
        };
        let rows = run_suite(&suite, 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].kl.is_nan() && !rows[0].succeeded());
    }

    #[test]
    fn csv_round_trip_and_summary() {
        let mk = |model, seed, kl: f64, fisher: f64| SuiteRow {
            model,
            dataset: "gaussians".into(),
            dim: 2,
            modes: Some(4),
            seed,
            train_size: 50_000,
            kl,
            fisher,
            binning: "[-9:9]x64;[-9:9]x64".into(),
            config_hash: "00".into(),
            seconds: 1.5,
        };
        let rows = [
            mk(ModelKind::Gmm, 1, 0.1, 0.2),
            mk(ModelKind::Gmm, 2, 0.3, 0.4),
            mk(ModelKind::Gmm, 3, f64::NAN, f64::NAN),
            mk(ModelKind::Evl, 1, 0.5, 0.6),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        write_rows(&path, &rows[..2], false).unwrap();
        write_rows(&path, &rows[2..], true).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(&format!("{CSV_HEADER}\n")));
        assert_eq!(text.matches("model,").count(), 1);
        let back = read_rows(&path).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back[1], rows[1]);
        assert!(back[2].kl.is_nan());

        let summary = summarize(&back);
        assert_eq!(summary.len(), 2);
        let gmm = &summary[0];
        assert_eq!((gmm.runs, gmm.failed), (2, 1));
        assert!((gmm.kl_mean - 0.2).abs() < 1e-12);
        assert!((gmm.kl_std - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(summary[1].kl_std, 0.0);
    }

    #[test]
    fn dumps_written_when_requested() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            dump_dir: Some(dir.path().to_path_buf()),
            ..quick_cfg(ModelKind::Gmm)
        };
        run_cell(&cfg).unwrap();
        let stem = cell_stem(&cfg);
        for suffix in ["model.hist", "test.hist", "samples.txt"] {
            assert!(dir.path().join(format!("{stem}-{suffix}")).exists(), "{suffix}");
        }
        let samples = Dataset::load(&dir.path().join(format!("{stem}-samples.txt"))).unwrap();
        assert_eq!(samples.len(), cfg.eval_samples);
    }

    #[test]
    fn suite_sizes() {
        assert_eq!(SuiteConfig::default().cells().len(), 240);
        assert_eq!(SuiteConfig::swiss_roll().cells().len(), 15);
        let ci = SuiteConfig::ci();
        assert_eq!(ci.cells().len(), 24);
        assert_eq!(ci.base.train.epochs, 10);
    }
}
