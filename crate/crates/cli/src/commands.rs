//! The subcommands, as plain functions over parsed inputs.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::Path;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rfib_core::color::ImageManifest;
use rfib_core::metrics::read_records;
use rfib_core::{
    loss_grad_check, renyi_gauss_diag, run_experiment, synth_generate, AuditReport, DiagGaussian, LabeledBatch,
    MetricsReport, RfibHyper, RfibModel, Tensor,
};

use crate::bundle::{write_atomic, write_bundle, ResultBundle};
use crate::config::{DataSource, ExperimentConfig, SweepGrid};
use crate::error::CliError;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const FAILURES_FILE: &str = "failures.csv";

/// CAI orders reported when a baseline is given without `--lambda`.
pub const DEFAULT_LAMBDAS: [f64; 2] = [0.5, 0.75];

/// `(train, test)` for the configured source.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(LabeledBatch, LabeledBatch), CliError> {
    match &cfg.data {
        DataSource::Synthetic(opts) => {
            synth_generate(&opts.spec(), cfg.data_seed).map_err(|e| CliError::compute("synthetic data", e))
        }
        DataSource::Manifest {
            path,
            image_size,
            test_fraction,
        } => {
            let ctx = path.display().to_string();
            let manifest = ImageManifest::load(path).map_err(|e| CliError::compute(&ctx, e))?;
            let all = manifest.to_batch(*image_size).map_err(|e| CliError::compute(&ctx, e))?;
            all.split(*test_fraction, cfg.data_seed)
                .map_err(|e| CliError::compute(&ctx, e))
        }
    }
}

/// Train, fit the classifier, evaluate and write one bundle into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<ResultBundle, CliError> {
    let (train, test) = load_data(cfg)?;
    run_on(cfg, &train, &test, out)
}

fn run_on(cfg: &ExperimentConfig, train: &LabeledBatch, test: &LabeledBatch, out: &Path) -> Result<ResultBundle, CliError> {
    let hyper = cfg.train.hyper;
    info!(
        "training {} (alpha {}, beta1 {}, beta2 {}) seed {}",
        hyper.method(),
        hyper.alpha,
        hyper.beta1,
        hyper.beta2,
        cfg.train.seed
    );
    let outcome = run_experiment(&cfg.train, train, test).map_err(|e| CliError::compute("training", e))?;
    write_bundle(out, cfg, &outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub hyper: RfibHyper,
    pub seed: u64,
    pub result: Result<MetricsReport, String>,
}

/// Runs every grid point (alpha-major order) with seed `base + index`, at
/// most `jobs` at a time. Point `i` goes to `out/point-iiii`; failures are
/// recorded and do not stop the sweep.
pub fn sweep(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Vec<SweepPoint>, CliError> {
    let grid = cfg.grid();
    let (train, test) = load_data(cfg)?;
    fs::create_dir_all(out).map_err(|e| CliError::io(&out.display().to_string(), e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let points: Vec<SweepPoint> = pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(index, &hyper)| {
                let mut point = cfg.clone();
                point.train.hyper = hyper;
                point.train.seed = cfg.train.seed.wrapping_add(index as u64);
                point.sweep = SweepGrid::default();
                let dir = out.join(format!("point-{index:04}"));
                let result = run_on(&point, &train, &test, &dir).map(|b| b.metrics).map_err(|e| {
                    warn!("sweep point {index} failed: {e}");
                    e.to_string()
                });
                SweepPoint {
                    index,
                    hyper,
                    seed: point.train.seed,
                    result,
                }
            })
            .collect()
    });
    write_atomic(&out.join(SUMMARY_FILE), summary_csv(&points).as_bytes())?;
    write_atomic(&out.join(FAILURES_FILE), failures_csv(&points)?.as_bytes())?;
    Ok(points)
}

/// One row per successful point, in grid order.
pub fn summary_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("alpha,beta1,beta2,acc,acc_gap,acc_min,dp_gap,eqodds_gap\n");
    for p in points {
        if let Ok(m) = &p.result {
            let h = p.hyper;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                h.alpha, h.beta1, h.beta2, m.acc, m.acc_gap, m.acc_min, m.dp_gap, m.eqodds_gap
            );
        }
    }
    s
}

fn failures_csv(points: &[SweepPoint]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let other = |e: csv::Error| CliError::Other(e.to_string());
    w.write_record(["index", "alpha", "beta1", "beta2", "seed", "error"]).map_err(other)?;
    for p in points {
        if let Err(msg) = &p.result {
            let h = p.hyper;
            w.write_record([
                p.index.to_string(),
                h.alpha.to_string(),
                h.beta1.to_string(),
                h.beta2.to_string(),
                p.seed.to_string(),
                msg.clone(),
            ])
            .map_err(other)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn load_report(path: &Path) -> Result<MetricsReport, CliError> {
    let ctx = path.display().to_string();
    let file = File::open(path).map_err(|e| CliError::Config(format!("{ctx}: {e}")))?;
    let records = read_records(file).map_err(|e| CliError::Config(format!("{ctx}: {e}")))?;
    MetricsReport::from_records(&records).map_err(|e| CliError::Config(format!("{ctx}: {e}")))
}

/// Metrics of `predictions`, plus CAI rows against `baseline` if given.
pub fn audit(predictions: &Path, baseline: Option<&Path>, lambdas: &[f64]) -> Result<AuditReport, CliError> {
    let metrics = load_report(predictions)?;
    let base = baseline.map(load_report).transpose()?;
    let lambdas = if lambdas.is_empty() { &DEFAULT_LAMBDAS[..] } else { lambdas };
    let label = predictions
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "predictions".into());
    AuditReport::new(label, metrics, base, lambdas).map_err(|e| CliError::Config(e.to_string()))
}

/// Gradient check of the configured loss at a fresh initialization, on
/// `samples` rows spread evenly over the training split.
pub fn gradcheck(cfg: &ExperimentConfig, samples: usize, step: f64) -> Result<f64, CliError> {
    let (train, _) = load_data(cfg)?;
    if samples == 0 || samples > train.len() {
        return Err(CliError::Config(format!("samples must lie in 1..={}", train.len())));
    }
    let idx: Vec<usize> = (0..samples).map(|i| i * train.len() / samples).collect();
    let batch = train.select(&idx);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let model = RfibModel::init(&cfg.train.architecture(batch.input_width()), &mut rng);
    let d = cfg.train.latent_dim;
    let eps: Vec<f64> = (0..samples * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let eps = Tensor::matrix(samples, d, eps).map_err(|e| CliError::Other(e.to_string()))?;
    loss_grad_check(&model, &batch, &cfg.train.hyper, &eps, step).map_err(|e| CliError::compute("gradcheck", e))
}

/// `alpha,divergence` CSV; infinite orders print `inf`.
pub fn divtable(p: &DiagGaussian, q: &DiagGaussian, alphas: &[f64]) -> Result<String, CliError> {
    if p.dim() != q.dim() {
        return Err(CliError::Config(format!("dimension mismatch: {} vs {}", p.dim(), q.dim())));
    }
    let mut s = String::from("alpha,divergence\n");
    for &a in alphas {
        match renyi_gauss_diag(p, q, a) {
            Ok(v) => {
                let _ = writeln!(s, "{a},{v}");
            }
            Err(rfib_core::Error::InfiniteDivergence { .. }) => {
                let _ = writeln!(s, "{a},inf");
            }
            Err(e) => return Err(CliError::Config(e.to_string())),
        }
    }
    Ok(s)
}

/// `0, step, 2 step, ..., max` (inclusive, rounded to avoid drift).
pub fn alpha_grid(max: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0 && max >= 0.0 && step.is_finite() && max.is_finite()) {
        return Err(CliError::Config("alpha grid needs max >= 0 and step > 0".into()));
    }
    let n = (max / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((i as f64 * step) * 1e12).round() / 1e12).collect())
}
