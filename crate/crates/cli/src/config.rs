//! Flat `key = value` experiment configuration.
//!
//! Blank lines and anything after `#` are ignored. Exactly one data source
//! must be given: `synthetic = default` (optionally refined by `synth.*`
//! keys) or `manifest = <path>`. List values are comma separated.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rfib_core::{EvalMode, OptimizerKind, RfibHyper, SynthSpec, TrainConfig};

use crate::error::CliError;

/// Environment variable that overrides the config seed.
pub const SEED_ENV: &str = "RFIB_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub d_x: usize,
    pub y_signal: f64,
    pub s_signal: f64,
    pub noise_std: f64,
    /// `[y0s0, y0s1, y1s0, y1s1]`
    pub train_counts: [usize; 4],
    pub test_per_cell: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            d_x: 10,
            y_signal: 1.5,
            s_signal: 1.0,
            noise_std: 1.0,
            train_counts: [500, 250, 500, 0],
            test_per_cell: 100,
        }
    }
}

impl SynthOptions {
    pub fn spec(&self) -> SynthSpec {
        let c = self.train_counts;
        SynthSpec::with_signals(
            self.d_x,
            self.y_signal,
            self.s_signal,
            self.noise_std,
            [[c[0], c[1]], [c[2], c[3]]],
            self.test_per_cell,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SynthOptions),
    Manifest {
        path: PathBuf,
        image_size: usize,
        test_fraction: f64,
    },
}

/// Hyperparameter grid; an empty axis falls back to the base value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepGrid {
    pub alpha: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Seed for data generation and train/test splitting, independent of
    /// the training seed so sweep points share one dataset.
    pub data_seed: u64,
    pub train: TrainConfig,
    pub sweep: SweepGrid,
}

const KEYS: &[&str] = &[
    "synthetic",
    "manifest",
    "image_size",
    "test_fraction",
    "data_seed",
    "synth.d_x",
    "synth.y_signal",
    "synth.s_signal",
    "synth.noise_std",
    "synth.train_counts",
    "synth.test_per_cell",
    "alpha",
    "beta1",
    "beta2",
    "hidden",
    "latent_dim",
    "head_hidden",
    "epochs",
    "batch_size",
    "learning_rate",
    "optimizer",
    "seed",
    "eval_mode",
    "sweep.alpha",
    "sweep.beta1",
    "sweep.beta2",
];

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", no + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(CliError::Config(format!("line {}: unknown key {k:?}", no + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key {k:?}", no + 1)));
        }
    }
    Ok(out)
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {v:?}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|item| value(key, item.trim())).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parses config text. Relative manifest paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let kv = parse_pairs(text)?;
        let get = |k: &str| kv.get(k).map(String::as_str);

        let data = match (get("synthetic"), get("manifest")) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give exactly one of synthetic or manifest".into()))
            }
            (None, None) => {
                return Err(CliError::Config("missing data source: set synthetic or manifest".into()))
            }
            (Some(kind), None) => {
                if kind != "default" {
                    return Err(CliError::Config(format!("synthetic: unknown preset {kind:?}")));
                }
                if get("image_size").is_some() || get("test_fraction").is_some() {
                    return Err(CliError::Config("image_size and test_fraction need a manifest".into()));
                }
                let mut s = SynthOptions::default();
                if let Some(v) = get("synth.d_x") {
                    s.d_x = value("synth.d_x", v)?;
                }
                if let Some(v) = get("synth.y_signal") {
                    s.y_signal = value("synth.y_signal", v)?;
                }
                if let Some(v) = get("synth.s_signal") {
                    s.s_signal = value("synth.s_signal", v)?;
                }
                if let Some(v) = get("synth.noise_std") {
                    s.noise_std = value("synth.noise_std", v)?;
                }
                if let Some(v) = get("synth.train_counts") {
                    let c: Vec<usize> = list("synth.train_counts", v)?;
                    s.train_counts = c
                        .try_into()
                        .map_err(|_| CliError::Config("synth.train_counts needs 4 values".into()))?;
                }
                if let Some(v) = get("synth.test_per_cell") {
                    s.test_per_cell = value("synth.test_per_cell", v)?;
                }
                s.spec().validate().map_err(|e| CliError::Config(e.to_string()))?;
                DataSource::Synthetic(s)
            }
            (None, Some(path)) => {
                if kv.keys().any(|k| k.starts_with("synth.")) {
                    return Err(CliError::Config("synth.* keys need synthetic = default".into()));
                }
                let path = PathBuf::from(path);
                let path = if path.is_relative() { base.join(path) } else { path };
                let image_size = get("image_size").map(|v| value("image_size", v)).transpose()?.unwrap_or(16);
                let test_fraction = get("test_fraction")
                    .map(|v| value("test_fraction", v))
                    .transpose()?
                    .unwrap_or(0.2);
                if image_size == 0 {
                    return Err(CliError::Config("image_size must be positive".into()));
                }
                if !(test_fraction > 0.0 && test_fraction < 1.0) {
                    return Err(CliError::Config("test_fraction must lie in (0, 1)".into()));
                }
                DataSource::Manifest {
                    path,
                    image_size,
                    test_fraction,
                }
            }
        };

        let mut train = TrainConfig::default();
        let mut hyper = train.hyper;
        if let Some(v) = get("alpha") {
            hyper.alpha = value("alpha", v)?;
        }
        if let Some(v) = get("beta1") {
            hyper.beta1 = value("beta1", v)?;
        }
        if let Some(v) = get("beta2") {
            hyper.beta2 = value("beta2", v)?;
        }
        train.hyper = hyper;
        if let Some(v) = get("hidden") {
            train.hidden = list("hidden", v)?;
        }
        if let Some(v) = get("latent_dim") {
            train.latent_dim = value("latent_dim", v)?;
        }
        if let Some(v) = get("head_hidden") {
            train.head_hidden = value("head_hidden", v)?;
        }
        if let Some(v) = get("epochs") {
            train.epochs = value("epochs", v)?;
        }
        if let Some(v) = get("batch_size") {
            train.batch_size = value("batch_size", v)?;
        }
        if let Some(v) = get("learning_rate") {
            train.learning_rate = value("learning_rate", v)?;
        }
        if let Some(v) = get("optimizer") {
            train.optimizer = OptimizerKind::from_str(v).map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Some(v) = get("eval_mode") {
            train.eval_mode = EvalMode::from_str(v).map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Some(v) = get("seed") {
            train.seed = value("seed", v)?;
        }
        let data_seed = get("data_seed").map(|v| value("data_seed", v)).transpose()?.unwrap_or(0);

        let sweep = SweepGrid {
            alpha: get("sweep.alpha").map(|v| list("sweep.alpha", v)).transpose()?.unwrap_or_default(),
            beta1: get("sweep.beta1").map(|v| list("sweep.beta1", v)).transpose()?.unwrap_or_default(),
            beta2: get("sweep.beta2").map(|v| list("sweep.beta2", v)).transpose()?.unwrap_or_default(),
        };

        let cfg = Self {
            data,
            data_seed,
            train,
            sweep,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: rfib_core::Error| CliError::Config(e.to_string());
        self.train.validate().map_err(cfg)?;
        for &a in &self.sweep.alpha {
            RfibHyper::new(a, 0.0, 0.0).map_err(cfg)?;
        }
        for &b in self.sweep.beta1.iter().chain(&self.sweep.beta2) {
            RfibHyper::new(1.0, b, b).map_err(cfg)?;
        }
        Ok(())
    }

    /// Applies the seed precedence: `--seed` beats `RFIB_SEED`, which beats
    /// the file.
    pub fn apply_seed_overrides(&mut self, flag: Option<u64>, env: Option<&str>) -> Result<(), CliError> {
        if let Some(v) = env {
            self.train.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}: cannot parse {v:?}")))?;
        }
        if let Some(s) = flag {
            self.train.seed = s;
        }
        Ok(())
    }

    /// Grid points in alpha-major order.
    pub fn grid(&self) -> Vec<RfibHyper> {
        let base = self.train.hyper;
        let axis = |v: &[f64], d: f64| if v.is_empty() { vec![d] } else { v.to_vec() };
        let mut out = Vec::new();
        for &alpha in &axis(&self.sweep.alpha, base.alpha) {
            for &beta1 in &axis(&self.sweep.beta1, base.beta1) {
                for &beta2 in &axis(&self.sweep.beta2, base.beta2) {
                    out.push(RfibHyper { alpha, beta1, beta2 });
                }
            }
        }
        out
    }

    /// Canonical config text; parsing it back yields an equal config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        match &self.data {
            DataSource::Synthetic(o) => {
                let _ = writeln!(s, "synthetic = default");
                let _ = writeln!(s, "synth.d_x = {}", o.d_x);
                let _ = writeln!(s, "synth.y_signal = {}", o.y_signal);
                let _ = writeln!(s, "synth.s_signal = {}", o.s_signal);
                let _ = writeln!(s, "synth.noise_std = {}", o.noise_std);
                let _ = writeln!(s, "synth.train_counts = {}", join(&o.train_counts));
                let _ = writeln!(s, "synth.test_per_cell = {}", o.test_per_cell);
            }
            DataSource::Manifest {
                path,
                image_size,
                test_fraction,
            } => {
                let _ = writeln!(s, "manifest = {}", path.display());
                let _ = writeln!(s, "image_size = {image_size}");
                let _ = writeln!(s, "test_fraction = {test_fraction}");
            }
        }
        let t = &self.train;
        let _ = writeln!(s, "data_seed = {}", self.data_seed);
        let _ = writeln!(s, "alpha = {}", t.hyper.alpha);
        let _ = writeln!(s, "beta1 = {}", t.hyper.beta1);
        let _ = writeln!(s, "beta2 = {}", t.hyper.beta2);
        let _ = writeln!(s, "hidden = {}", join(&t.hidden));
        let _ = writeln!(s, "latent_dim = {}", t.latent_dim);
        let _ = writeln!(s, "head_hidden = {}", t.head_hidden);
        let _ = writeln!(s, "epochs = {}", t.epochs);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "learning_rate = {}", t.learning_rate);
        let _ = writeln!(s, "optimizer = {}", t.optimizer);
        let _ = writeln!(s, "seed = {}", t.seed);
        let _ = writeln!(s, "eval_mode = {}", t.eval_mode);
        for (k, v) in [("alpha", &self.sweep.alpha), ("beta1", &self.sweep.beta1), ("beta2", &self.sweep.beta2)] {
            if !v.is_empty() {
                let _ = writeln!(s, "sweep.{k} = {}", join(v));
            }
        }
        s
    }
}
