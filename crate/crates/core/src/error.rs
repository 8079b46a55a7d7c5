use thiserror::Error;

/// Errors produced by the sampler library and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite state at step {step}")]
    NumericalFailure { step: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("could not draw a feasible initial point after {attempts} attempts")]
    Initialization { attempts: usize },

    #[error("rejection sampler exceeded {proposals} proposals for {requested} samples")]
    DegenerateConstraint { proposals: usize, requested: usize },

    #[error("detection failed: {0}")]
    Detection(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
