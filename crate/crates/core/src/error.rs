use thiserror::Error;

/// Errors raised anywhere in the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("tape was created without gradient recording")]
    NotRecording,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("support violation: q({index}) = 0 while p({index}) > 0")]
    SupportViolation { index: usize },

    #[error(
        "Renyi divergence of order {alpha} is infinite: (1-alpha)*var_p + alpha*var_q = {value} <= 0 in dimension {dim}"
    )]
    InfiniteDivergence { alpha: f64, dim: usize, value: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("non-finite loss at epoch {epoch}, step {step}: offending term {term}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        term: &'static str,
    },

    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
