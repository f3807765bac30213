use std::path::PathBuf;

use thiserror::Error;

/// Failures of a single dense inversion. These are expected, rare events
/// inside population dynamics and are counted rather than propagated there.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum NumericalError {
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("rank-one correction has a vanishing denominator ({0:e})")]
    VanishingDenominator(f64),
    #[error("non-finite value produced")]
    NonFinite,
    #[error("Cholesky factorization failed; matrix is not positive definite")]
    NotPositiveDefinite,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("kernel normalization error: {0}")]
    Normalization(String),
    #[error(transparent)]
    Numerical(#[from] NumericalError),
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
