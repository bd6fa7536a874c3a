//! Seeded mini-batch training and the two-stage evaluation pipeline.
//!
//! Everything random during training (weight init, epoch shuffles and the
//! reparameterization noise) is drawn from one ChaCha8 stream seeded by
//! [`TrainConfig::seed`], so a `(config, data)` pair fully determines the
//! trained model and its history.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::LabeledBatch;
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, PredictionRecord};
use crate::model::{logistic_fit, logistic_predict, Architecture, EncoderParams, LogisticParams, RfibModel};
use crate::objective::{rfib_loss, LossTerms, ModelVars, RfibHyper};
use crate::optim::{Adam, Optimizer, Sgd};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Where evaluation-time representations come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// `z = mu(x)`; deterministic.
    Mean,
    /// `z = mu(x) + sigma(x) * eps` with seeded noise.
    Sample,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(Error::InvalidArgument(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "sample" => Ok(Self::Sample),
            other => Err(Error::InvalidArgument(format!("unknown eval mode {other:?}"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sgd => "sgd",
            Self::Adam => "adam",
        })
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Sample => "sample",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hyper: RfibHyper,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub head_hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub eval_mode: EvalMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hyper: RfibHyper {
                alpha: 0.8,
                beta1: 30.0,
                beta2: 30.0,
            },
            hidden: vec![64, 64],
            latent_dim: 8,
            head_hidden: 32,
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            eval_mode: EvalMode::Mean,
        }
    }
}

impl TrainConfig {
    pub fn architecture(&self, inputs: usize) -> Architecture {
        Architecture {
            inputs,
            hidden: self.hidden.clone(),
            latent: self.latent_dim,
            head_hidden: self.head_hidden,
        }
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.latent_dim == 0 || self.head_hidden == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        Ok(())
    }

    fn validate_for(&self, data: &LabeledBatch) -> Result<()> {
        self.validate()?;
        if self.batch_size > data.len() {
            return Err(Error::InvalidArgument(format!(
                "batch_size {} exceeds dataset size {}",
                self.batch_size,
                data.len()
            )));
        }
        if !data.has_both_classes() {
            return Err(Error::InvalidData("training data needs both y classes".into()));
        }
        Ok(())
    }
}

/// Sample-weighted means of the loss and its components over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub compression: f64,
    pub nll_f: f64,
    pub nll_g: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// CSV with columns `epoch,loss,compression,nll_f,nll_g`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.epochs {
            w.serialize(e)?;
        }
        if self.epochs.is_empty() {
            w.write_record(["epoch", "loss", "compression", "nll_f", "nll_g"])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: RfibModel,
    pub history: TrainHistory,
}

/// Trains encoder and heads on the RFIB loss.
pub fn train(config: &TrainConfig, data: &LabeledBatch) -> Result<Trained> {
    let hyper = config.hyper;
    train_with(config, data, move |tape, vars, batch, eps| {
        rfib_loss(tape, vars, batch, &hyper, eps)
    })
}

/// Training loop with a pluggable loss; [`train`] plugs in [`rfib_loss`].
pub fn train_with<F>(config: &TrainConfig, data: &LabeledBatch, loss: F) -> Result<Trained>
where
    F: Fn(&mut Tape, &ModelVars, &LabeledBatch, &Tensor) -> Result<LossTerms>,
{
    config.validate_for(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = RfibModel::init(&config.architecture(data.input_width()), &mut rng);
    let mut optimizer: Box<dyn Optimizer> = match config.optimizer {
        OptimizerKind::Sgd => Box::new(Sgd {
            lr: config.learning_rate,
        }),
        OptimizerKind::Adam => Box::new(Adam::new(config.learning_rate)),
    };

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();
    let d = config.latent_dim;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = data.select(chunk);
            let eps = standard_normal(chunk.len(), d, &mut rng);

            let diagnose = |e: Error| match e {
                Error::NonFinite { op } => Error::NonFiniteLoss { epoch, step, term: op },
                other => other,
            };
            let mut tape = Tape::new();
            let vars = ModelVars::bind(&model, &mut tape);
            let terms = loss(&mut tape, &vars, &batch, &eps).map_err(diagnose)?;
            let v = terms.values(&tape);
            let grads = tape.backward(terms.total).map_err(diagnose)?;
            let g: Vec<Tensor> = vars
                .vars()
                .into_iter()
                .zip(model.tensors())
                .map(|(var, t)| grads.wrt_like(var, t))
                .collect();
            if g.iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, step, term: "gradient" });
            }
            optimizer.step(&mut model.tensors_mut(), &g)?;
            if model.tensors().iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, step, term: "parameters" });
            }

            let w = chunk.len() as f64;
            sums[0] += w * v.total;
            sums[1] += w * v.compression;
            sums[2] += w * v.nll_f;
            sums[3] += w * v.nll_g;
        }
        let n = data.len() as f64;
        history.epochs.push(EpochStats {
            epoch,
            loss: sums[0] / n,
            compression: sums[1] / n,
            nll_f: sums[2] / n,
            nll_g: sums[3] / n,
        });
    }
    Ok(Trained { model, history })
}

fn standard_normal<R: rand::Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::matrix(rows, cols, data).expect("non-empty noise")
}

/// Noise stream for evaluation-time sampling; independent of training.
fn eval_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const FIT_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;

/// Encoder outputs used as classifier features.
pub fn representations<R: rand::Rng>(
    encoder: &EncoderParams,
    x: &Tensor,
    mode: EvalMode,
    rng: &mut R,
) -> Result<Tensor> {
    let (mu, sigma) = encoder.encode(x)?;
    Ok(match mode {
        EvalMode::Mean => mu,
        EvalMode::Sample => {
            let (n, d) = mu.dims2().expect("matrix");
            let eps = standard_normal(n, d, rng);
            let noise = sigma.zip_map(&eps, "sample", |s, e| s * e)?;
            mu.zip_map(&noise, "sample", |m, e| m + e)?
        }
    })
}

/// Fits the downstream logistic classifier on training representations.
pub fn fit_classifier(encoder: &EncoderParams, train: &LabeledBatch, mode: EvalMode, seed: u64) -> Result<LogisticParams> {
    let z = representations(encoder, &train.x, mode, &mut eval_rng(seed, FIT_STREAM))?;
    logistic_fit(&z, &train.y)
}

/// One prediction record per row of `data`.
pub fn evaluate(
    encoder: &EncoderParams,
    classifier: &LogisticParams,
    mode: EvalMode,
    data: &LabeledBatch,
    seed: u64,
) -> Result<Vec<PredictionRecord>> {
    let z = representations(encoder, &data.x, mode, &mut eval_rng(seed, EVAL_STREAM))?;
    let (yhat, phat) = logistic_predict(classifier, &z)?;
    Ok((0..data.len())
        .map(|i| PredictionRecord {
            yhat: yhat[i],
            phat: phat[i],
            y: data.y[i],
            s: data.s[i],
        })
        .collect())
}

/// Everything produced by one train → fit → evaluate run.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub model: RfibModel,
    pub history: TrainHistory,
    pub classifier: LogisticParams,
    pub records: Vec<PredictionRecord>,
    pub report: MetricsReport,
}

/// Trains on `train`, fits the classifier on training representations and
/// evaluates on `test`.
pub fn run_experiment(config: &TrainConfig, train_data: &LabeledBatch, test: &LabeledBatch) -> Result<ExperimentOutcome> {
    let Trained { model, history } = train(config, train_data)?;
    let classifier = fit_classifier(&model.encoder, train_data, config.eval_mode, config.seed)?;
    let records = evaluate(&model.encoder, &classifier, config.eval_mode, test, config.seed)?;
    let report = MetricsReport::from_records(&records)?;
    Ok(ExperimentOutcome {
        model,
        history,
        classifier,
        records,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthSpec};

    fn small_config() -> TrainConfig {
        TrainConfig {
            hidden: vec![8],
            latent_dim: 2,
            head_hidden: 4,
            epochs: 3,
            batch_size: 16,
            ..TrainConfig::default()
        }
    }

    fn small_data() -> (LabeledBatch, LabeledBatch) {
        let spec = SynthSpec::with_signals(4, 1.5, 1.0, 1.0, [[30, 20], [30, 0]], 10);
        synth_generate(&spec, 3).unwrap()
    }

    #[test]
    fn zero_epochs_keeps_initial_weights() {
        let (train_data, _) = small_data();
        let cfg = TrainConfig { epochs: 0, ..small_config() };
        let out = train(&cfg, &train_data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = RfibModel::init(&cfg.architecture(4), &mut rng);
        assert_eq!(out.model, init);
        assert!(out.history.is_empty());
    }

    #[test]
    fn history_has_one_row_per_epoch() {
        let (train_data, _) = small_data();
        let out = train(&small_config(), &train_data).unwrap();
        assert_eq!(out.history.len(), 3);
        let mut buf = Vec::new();
        out.history.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,loss,compression,nll_f,nll_g\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn config_validation() {
        let (train_data, _) = small_data();
        let big = TrainConfig { batch_size: 1000, ..small_config() };
        assert!(train(&big, &train_data).is_err());
        let bad_lr = TrainConfig { learning_rate: 0.0, ..small_config() };
        assert!(train(&bad_lr, &train_data).is_err());
        let one_class = train_data.select(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16]);
        assert!(train(&small_config(), &one_class).is_err());
    }

    #[test]
    fn sgd_also_trains() {
        let (train_data, _) = small_data();
        let cfg = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            learning_rate: 1e-3,
            ..small_config()
        };
        assert_eq!(train(&cfg, &train_data).unwrap().history.len(), 3);
    }

    #[test]
    fn non_finite_loss_names_the_term() {
        let (train_data, _) = small_data();
        let cfg = small_config();
        let err = train_with(&cfg, &train_data, |tape, vars, batch, eps| {
            let mut terms = rfib_loss(tape, vars, batch, &cfg.hyper, eps)?;
            let neg = tape.scale(terms.total, -1.0)?;
            terms.total = tape.log(neg).map_err(|_| Error::NonFinite { op: "probe" })?;
            Ok(terms)
        })
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, step: 0, term: "probe" }), "{err}");
    }

    #[test]
    fn zero_encoder_predicts_majority() {
        let (train_data, test) = small_data();
        let enc = EncoderParams::zeros(4, &[3], 2);
        // 50 negatives vs 30 positives in training
        let clf = fit_classifier(&enc, &train_data, EvalMode::Mean, 0).unwrap();
        let recs = evaluate(&enc, &clf, EvalMode::Mean, &test, 0).unwrap();
        assert_eq!(recs.len(), test.len());
        assert!(recs.iter().all(|r| r.yhat == 0));
    }

    #[test]
    fn sample_mode_is_seeded() {
        let (train_data, test) = small_data();
        let enc = EncoderParams::init(4, &[3], 2, &mut ChaCha8Rng::seed_from_u64(1));
        let clf = fit_classifier(&enc, &train_data, EvalMode::Sample, 5).unwrap();
        let a = evaluate(&enc, &clf, EvalMode::Sample, &test, 5).unwrap();
        let b = evaluate(&enc, &clf, EvalMode::Sample, &test, 5).unwrap();
        assert_eq!(a, b);
        let mean = evaluate(&enc, &clf, EvalMode::Mean, &test, 5).unwrap();
        assert_ne!(a, mean);
    }

    #[test]
    fn parse_enums() {
        assert_eq!("adam".parse::<OptimizerKind>().unwrap(), OptimizerKind::Adam);
        assert_eq!("sample".parse::<EvalMode>().unwrap(), EvalMode::Sample);
        assert!("rmsprop".parse::<OptimizerKind>().is_err());
    }
}
