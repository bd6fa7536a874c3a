//! Rényi Fair Information Bottleneck (RFIB) at desk scale.
//!
//! The crate trains stochastic Gaussian encoders `P(Z|X)` under
//!
//! ```text
//! J = E_x D_alpha(P(Z|X=x) ‖ N(0, I)) - beta1 E log Q(y|z) - beta2 E log Q(y|s,z)
//! ```
//!
//! and audits the downstream classifier with accuracy, demographic-parity
//! and equalized-odds gaps.
//!
//! Modules, bottom-up:
//!
//! - [`tensor`] and [`autodiff`]: dense arrays and a reverse-mode tape.
//! - [`divergence`]: Rényi divergences with a quadrature oracle.
//! - [`model`]: encoder, Bernoulli heads, logistic classifier, checkpoints.
//! - [`objective`]: the RFIB loss and its IB / CFB reductions.
//! - [`optim`] and [`trainer`]: seeded training and evaluation.
//! - [`metrics`]: fairness metrics and CAI.
//! - [`data`] and [`color`]: synthetic biased data and the ITA proxy.

pub mod autodiff;
pub mod color;
pub mod data;
pub mod divergence;
pub mod error;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod optim;
pub mod tensor;
pub mod trainer;

pub use autodiff::{grad_check, Gradients, OpKind, Tape, Var};
pub use data::{synth_generate, LabeledBatch, SynthSpec};
pub use divergence::{quadrature_oracle_1d, renyi_discrete, renyi_gauss_diag, DiagGaussian, DiscreteDist};
pub use error::{Error, Result};
pub use metrics::{cai, AuditReport, MetricsReport, PredictionRecord};
pub use model::{Architecture, Checkpoint, EncoderParams, HeadParams, LogisticParams, RfibModel};
pub use objective::{loss_grad_check, rfib_loss, Method, ModelVars, RfibHyper};
pub use tensor::Tensor;
pub use trainer::{run_experiment, train, EvalMode, ExperimentOutcome, OptimizerKind, TrainConfig, TrainHistory};
