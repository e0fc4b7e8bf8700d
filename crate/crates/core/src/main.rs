use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use evl_core::baselines::{gmm_fit, gmm_sample, GmmModel};
use evl_core::datasets::{Dataset, Split};
use evl_core::evl::{
    rejection_sample_batched, train, EvlCheckpoint, EvlNet, EvlObjective, GuessLayout,
};
use evl_core::harness::{
    compare_histograms, grid_for_dataset, run_suite, save_evl_checkpoint, summarize, worker_count, write_rows,
    write_summary, DatasetSpec, FittedModel, ModelKind, RunConfig, SuiteConfig, SuiteRow,
};
use evl_core::metrics::{histogram, FisherForm};
use evl_core::neuralnet::{gradient_check, GuessMode};
use evl_core::numcore::Rng;
use evl_core::{Error, Result};

#[derive(Parser)]
#[command(name = "evl", version, about = "Extreme-value loss generative models, baselines and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write train and test splits of a synthetic dataset.
    GenData(GenDataArgs),
    /// Train an EVL net or fit a GMM on a dataset file.
    Train(TrainArgs),
    /// Draw samples from a saved model.
    Sample(SampleArgs),
    /// Score a model against a test set and append a CSV row.
    Eval(EvalArgs),
    /// Run an experiment grid.
    Suite(SuiteArgs),
    /// Finite-difference check of the EVL gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[command(subcommand)]
    kind: GenKind,
}

#[derive(Subcommand)]
enum GenKind {
    Gaussians {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        modes: usize,
        #[command(flatten)]
        common: GenCommon,
    },
    Swissroll {
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0.5)]
        scale: f64,
        #[command(flatten)]
        common: GenCommon,
    },
}

#[derive(Args)]
struct GenCommon {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    train: usize,
    #[arg(long)]
    test: usize,
    /// Directory receiving train.txt and test.txt.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainableModel {
    Evl,
    Gmm,
}

/// Overrides applied on top of a JSON run config.
#[derive(Args)]
struct Overrides {
    /// JSON run configuration; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    guesses: Option<usize>,
    #[arg(long, value_parser = parse_guess_mode)]
    guess_mode: Option<GuessMode>,
    #[arg(long)]
    components: Option<usize>,
    #[arg(long)]
    eval_samples: Option<usize>,
    #[arg(long)]
    draws_per_batch: Option<usize>,
    #[arg(long, value_parser = parse_fisher_form)]
    fisher_form: Option<FisherForm>,
}

fn parse_guess_mode(s: &str) -> std::result::Result<GuessMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_fisher_form(s: &str) -> std::result::Result<FisherForm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.guesses {
            cfg.train.guesses = v;
        }
        if let Some(v) = self.guess_mode {
            cfg.train.guess_mode = v;
        }
        if let Some(v) = self.components {
            cfg.gmm.components = v;
        }
        if let Some(v) = self.eval_samples {
            cfg.eval_samples = v;
        }
        if let Some(v) = self.draws_per_batch {
            cfg.draws_per_batch = v;
        }
        if let Some(v) = self.fisher_form {
            cfg.fisher_form = v;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: TrainableModel,
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss CSV (EVL only).
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_parser = parse_model)]
    model: ModelKind,
    /// Model checkpoint (EVL or GMM).
    #[arg(long, required_unless_present = "train")]
    checkpoint: Option<PathBuf>,
    /// Training set, for the empirical model.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: PathBuf,
    /// Results CSV to append to.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Directory for histogram dumps.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteKind {
    Gaussians,
    Swissroll,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long, value_enum, default_value = "gaussians")]
    kind: SuiteKind,
    /// Reduced grid: one seed, 10 epochs, 1-d and 2-d mixtures.
    #[arg(long)]
    ci: bool,
    /// JSON suite configuration (replaces the built-in grid).
    #[arg(long)]
    suite_config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_model)]
    models: Option<Vec<ModelKind>>,
    #[arg(long)]
    train_size: Option<usize>,
    /// Raw per-seed rows.
    #[arg(long)]
    out: PathBuf,
    /// Mean/std per cell.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    dump_dir: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[command(flatten)]
    overrides: Overrides,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Suite(a) => suite_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn write_splits(spec: DatasetSpec, common: &GenCommon) -> Result<()> {
    let dir = &common.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    for (split, n, name) in [(Split::Train, common.train, "train.txt"), (Split::Test, common.test, "test.txt")] {
        let data = spec.generate(common.seed, n, split)?;
        let path = dir.join(name);
        data.save(&path)?;
        log::info!("wrote {} points to {}", data.len(), path.display());
    }
    Ok(())
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    match args.kind {
        GenKind::Gaussians { dim, modes, common } => write_splits(DatasetSpec::Gaussians { dim, modes }, &common),
        GenKind::Swissroll { noise, scale, common } => write_splits(DatasetSpec::SwissRoll { noise, scale }, &common),
    }
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut cfg = args.overrides.resolve()?;
    let data = Dataset::load(&args.data)?;
    let rng = Rng::new(cfg.seed);
    match args.model {
        TrainableModel::Evl => {
            cfg.model = ModelKind::Evl;
            let mut net = EvlNet::new(data.dim(), &cfg.train, &mut rng.child(0))?;
            let history = train(&mut net, &data, &cfg.train, &mut rng.child(1))?;
            if let Some(last) = history.epochs.last() {
                log::info!("trained {} epochs, final loss {:.5}", history.epochs.len(), last.loss);
            }
            save_evl_checkpoint(&net, &cfg, &args.out)?;
            if let Some(h) = &args.history {
                std::fs::write(h, history.to_csv()).map_err(|e| Error::Io {
                    path: h.clone(),
                    source: e,
                })?;
            }
        }
        TrainableModel::Gmm => {
            cfg.model = ModelKind::Gmm;
            let fit = gmm_fit(&data.points, &cfg.gmm, &mut rng.child(0))?;
            log::info!(
                "EM ran {} iterations, mean log-likelihood {:.5}",
                fit.log_likelihood.len() - 1,
                fit.final_log_likelihood()
            );
            fit.model.save(&args.out)?;
        }
    }
    Ok(())
}

/// Loads an EVL or GMM checkpoint, trying EVL first.
fn load_model(path: &Path) -> Result<FittedModel> {
    match EvlCheckpoint::load(path) {
        Ok(c) => Ok(FittedModel::Evl(c.net)),
        Err(evl_err) => GmmModel::load(path).map(FittedModel::Gmm).map_err(|_| evl_err),
    }
}

fn sample_cmd(args: SampleArgs) -> Result<()> {
    let cfg = args.overrides.resolve()?;
    let mut rng = Rng::new(cfg.seed).child(2);
    let samples = match load_model(&args.checkpoint)? {
        FittedModel::Evl(net) => {
            rejection_sample_batched(&net, &mut rng, args.n, cfg.sampling_guesses(), cfg.draws_per_batch)?
        }
        FittedModel::Gmm(m) => gmm_sample(&m, &mut rng, args.n)?,
        FittedModel::Empirical(_) => unreachable!("checkpoints hold trained models"),
    };
    Dataset::new(samples, Default::default())?.save(&args.out)
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let mut cfg = args.overrides.resolve()?;
    cfg.model = args.model;
    let test = Dataset::load(&args.test)?;
    let grid = grid_for_dataset(&test)?;
    let model = match (args.model, &args.checkpoint, &args.train) {
        (ModelKind::Empirical, _, Some(train)) => FittedModel::Empirical(Dataset::load(train)?.points),
        (ModelKind::Empirical, _, None) => {
            return Err(Error::InvalidArgument("the empirical model needs --train".into()))
        }
        (_, Some(ckpt), _) => load_model(ckpt)?,
        (_, None, _) => return Err(Error::InvalidArgument("--checkpoint is required".into())),
    };
    let (model_hist, _) = model.histogram(&cfg, &grid, &mut Rng::new(cfg.seed).child(2))?;
    let test_hist = histogram(&test.points, &grid)?;
    let report = compare_histograms(&model_hist, &test_hist, cfg.fisher_form)?;
    println!("kl {:.6} fisher {:.6} binning {}", report.kl, report.fisher, report.binning);
    if let Some(dir) = &args.dump_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        model_hist.write_dump(&dir.join("model.hist"))?;
        test_hist.write_dump(&dir.join("test.hist"))?;
    }
    if let Some(csv) = &args.csv {
        let modes = test.meta.get("modes").and_then(|m| m.parse().ok());
        let row = SuiteRow {
            model: cfg.model,
            dataset: test.generator().unwrap_or("custom").to_string(),
            dim: test.dim(),
            modes,
            seed: cfg.seed,
            train_size: 0,
            kl: report.kl,
            fisher: report.fisher,
            binning: report.binning,
            config_hash: cfg.config_hash(),
            seconds: 0.0,
        };
        write_rows(csv, &[row], true)?;
    }
    Ok(())
}

fn suite_cmd(args: SuiteArgs) -> Result<()> {
    let base = args.overrides.resolve()?;
    let mut suite = if let Some(p) = &args.suite_config {
        let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?;
        serde_json::from_str(&text)?
    } else {
        let mut s = match (args.kind, args.ci) {
            (SuiteKind::Gaussians, true) => SuiteConfig::ci(),
            (SuiteKind::Gaussians, false) => SuiteConfig::default(),
            (SuiteKind::Swissroll, _) => SuiteConfig::swiss_roll(),
        };
        let ci_epochs = s.base.train.epochs;
        s.base = base;
        if args.ci {
            s.seeds = vec![1];
            s.base.train.epochs = args.overrides.epochs.unwrap_or(ci_epochs.min(10));
        }
        s
    };
    if matches!(args.kind, SuiteKind::Gaussians) && (args.dims.is_some() || args.modes.is_some()) {
        let dims = args.dims.clone().unwrap_or_else(|| vec![1, 2, 3, 4]);
        let modes = args.modes.clone().unwrap_or_else(|| vec![1, 2, 4, 10]);
        suite.datasets = SuiteConfig::gaussians(&dims, &modes).datasets;
    }
    if let Some(seeds) = &args.seeds {
        suite.seeds = seeds.clone();
    }
    if let Some(models) = &args.models {
        suite.models = models.clone();
    }
    if let Some(n) = args.train_size {
        suite.base.train_size = n;
    }
    if args.dump_dir.is_some() {
        suite.base.dump_dir = args.dump_dir.clone();
    }
    let workers = worker_count();
    log::info!("running {} cells on {workers} workers", suite.cells().len());
    let rows = run_suite(&suite, workers)?;
    write_rows(&args.out, &rows, false)?;
    let failed = rows.iter().filter(|r| !r.succeeded()).count();
    if let Some(p) = &args.summary {
        write_summary(p, &summarize(&rows))?;
    }
    for r in &rows {
        log::info!(
            "{} {} d{} n{:?} seed {}: kl {:.5} fisher {:.5} ({:.1}s)",
            r.model,
            r.dataset,
            r.dim,
            r.modes,
            r.seed,
            r.kl,
            r.fisher,
            r.seconds
        );
    }
    if failed > 0 {
        log::warn!("{failed} of {} cells failed", rows.len());
    }
    Ok(())
}

fn gradcheck_cmd(args: GradcheckArgs) -> Result<()> {
    let cfg = args.overrides.resolve()?;
    let rng = Rng::new(cfg.seed);
    let net = EvlNet::new(args.dim, &cfg.train, &mut rng.child(0))?;
    let targets = DatasetSpec::Gaussians { dim: args.dim, modes: 2 }
        .generate(cfg.seed, 8, Split::Train)?
        .points;
    let layout = match cfg.train.guess_mode {
        GuessMode::Shared => GuessLayout::Shared { k: cfg.train.guesses },
        GuessMode::Independent => GuessLayout::Independent { k: cfg.train.guesses },
    };
    let noise = net.draw_noise(layout.rows_needed(targets.rows()), &mut rng.child(1));
    let objective = EvlObjective {
        q: cfg.train.loss_exponent,
        mse_weight: cfg.train.mse_weight,
        ce_weight: cfg.train.ce_weight,
        ce_into_trunk: cfg.train.ce_into_trunk,
        ..EvlObjective::for_net(&net, noise, targets, layout)
    };
    let report = gradient_check(net.trunk(), &objective, args.samples, &mut rng.child(2))?;
    println!(
        "max relative error {:.3e} over {} parameters ({} skipped at kinks)",
        report.max_relative_error, report.probed, report.skipped_kinks
    );
    if report.max_relative_error < args.tolerance && report.probed >= args.samples {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "gradient check failed: {:.3e} >= {:.1e}",
            report.max_relative_error, args.tolerance
        )))
    }
}
