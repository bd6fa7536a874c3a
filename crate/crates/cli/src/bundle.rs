//! Result bundles: every artifact of one run under a single directory.
//!
//! Files are written to a temporary sibling and renamed into place; the
//! `bundle.json` index is written last, so its presence means every file
//! it references is complete.

use std::fs;
use std::path::{Path, PathBuf};

use rfib_core::trainer::ExperimentOutcome;
use rfib_core::{AuditReport, Checkpoint, Method, MetricsReport, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const CONFIG_FILE: &str = "config.txt";
pub const HISTORY_FILE: &str = "history.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TEXT: &str = "metrics.txt";
pub const INDEX_FILE: &str = "bundle.json";

/// Index of one run; paths are relative to the bundle directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub method: Method,
    pub seed: u64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub config: PathBuf,
    pub history: PathBuf,
    pub predictions: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics: MetricsReport,
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    method: Method,
    #[serde(flatten)]
    metrics: &'a MetricsReport,
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Other(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(&path.display().to_string(), e))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> rfib_core::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Other(e.to_string()))?;
    Ok(buf)
}

/// Model tensors plus the logistic classifier as `classifier.weight`
/// (`[d, 1]`) and `classifier.bias` (`[]`).
pub fn checkpoint(outcome: &ExperimentOutcome) -> Result<Checkpoint, CliError> {
    let mut ckpt = outcome.model.to_checkpoint();
    let w = &outcome.classifier.weight;
    let weight = Tensor::matrix(w.len(), 1, w.clone()).map_err(|e| CliError::Other(e.to_string()))?;
    ckpt.tensors.push(("classifier.weight".into(), weight));
    ckpt.tensors.push(("classifier.bias".into(), Tensor::scalar(outcome.classifier.bias)));
    Ok(ckpt)
}

/// Writes all artifacts of `outcome` into `dir` and returns the index.
pub fn write_bundle(dir: &Path, config: &ExperimentConfig, outcome: &ExperimentOutcome) -> Result<ResultBundle, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(&dir.display().to_string(), e))?;
    let hyper = config.train.hyper;
    let method = hyper.method();

    write_atomic(&dir.join(CONFIG_FILE), config.echo().as_bytes())?;
    let history = csv_bytes(|b| outcome.history.write_csv(b))?;
    write_atomic(&dir.join(HISTORY_FILE), &history)?;
    let preds = csv_bytes(|b| rfib_core::metrics::write_records(b, &outcome.records))?;
    write_atomic(&dir.join(PREDICTIONS_FILE), &preds)?;
    write_atomic(&dir.join(CHECKPOINT_FILE), checkpoint(outcome)?.to_text().as_bytes())?;

    let json = serde_json::to_string_pretty(&MetricsFile {
        method,
        metrics: &outcome.report,
    })
    .map_err(|e| CliError::Other(e.to_string()))?;
    write_atomic(&dir.join(METRICS_JSON), json.as_bytes())?;
    let table = AuditReport::new(method.to_string(), outcome.report.clone(), None, &[])
        .map_err(|e| CliError::Other(e.to_string()))?;
    write_atomic(&dir.join(METRICS_TEXT), table.to_string().as_bytes())?;

    let bundle = ResultBundle {
        method,
        seed: config.train.seed,
        alpha: hyper.alpha,
        beta1: hyper.beta1,
        beta2: hyper.beta2,
        config: CONFIG_FILE.into(),
        history: HISTORY_FILE.into(),
        predictions: PREDICTIONS_FILE.into(),
        checkpoint: CHECKPOINT_FILE.into(),
        metrics: outcome.report.clone(),
    };
    let index = serde_json::to_string_pretty(&bundle).map_err(|e| CliError::Other(e.to_string()))?;
    write_atomic(&dir.join(INDEX_FILE), index.as_bytes())?;
    Ok(bundle)
}
