use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("quantile order {0} is outside [0, 1)")]
    InvalidOrder(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix is not positive semi-definite")]
    NonPsdCovariance,

    #[error("sample is concentrated on a single line; geometric quantiles are not unique")]
    DegenerateSample,

    #[error(
        "solver did not converge after {iterations} iterations \
         (gradient norm {gradient_norm:e} at {point:?})"
    )]
    NotConverged {
        point: Vec<f64>,
        gradient_norm: f64,
        iterations: usize,
    },

    #[error("sample size {sample} does not match grid size {grid}")]
    SizeMismatch { sample: usize, grid: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
