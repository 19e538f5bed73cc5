use thiserror::Error;

/// Errors raised by the numeric core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("axis {mode} out of range for a {ndims}-way tensor")]
    ModeOutOfRange { mode: usize, ndims: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("rank {k} out of range (must be in 1..={max})")]
    RankOutOfRange { k: usize, max: usize },
    #[error("{0} did not converge after {1} iterations")]
    NonConvergence(&'static str, usize),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("normalization singularity: pre-normalization norm {0:e} is below threshold")]
    NormalizationSingularity(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("training diverged at epoch {epoch}: total loss {value}")]
    Diverged { epoch: usize, value: f64 },
    #[error("t-SNE perplexity bisection failed for sample {0}")]
    Bisection(usize),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
