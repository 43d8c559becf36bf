use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Model,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("non-numeric value `{value}` in column `{column}` at data row {row}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("dataset needs at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("target column `{0}` is constant")]
    ConstantTarget(String),
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model produced a non-finite prediction at row {row}")]
    NonFinitePrediction { row: usize },
    #[error("linear system is singular: {0}")]
    Singular(String),
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("logistic fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("classes are perfectly separated; refit with ridge_lambda > 0")]
    Separation,
    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error("feature {index}: {source}")]
    Feature {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. }
            | Error::Csv(_)
            | Error::MissingColumn(_)
            | Error::NonNumeric { .. }
            | Error::TooFewRows(_)
            | Error::ConstantTarget(_)
            | Error::InvalidData(_)
            | Error::DimensionMismatch(_)
            | Error::InvalidParameter(_)
            | Error::OracleUnavailable(_) => ErrorClass::Input,
            Error::Bridge(_) => ErrorClass::Model,
            Error::NonFinitePrediction { .. }
            | Error::Singular(_)
            | Error::NotPositiveDefinite
            | Error::NonConvergence { .. }
            | Error::Separation => ErrorClass::Numeric,
            Error::Feature { source, .. } => source.class(),
        }
    }

    pub(crate) fn in_feature(self, index: usize) -> Error {
        match self {
            e @ Error::Feature { .. } => e,
            e => Error::Feature {
                index,
                source: Box::new(e),
            },
        }
    }
}

/// Failures of the external-model bridge. Each one ends the session.
#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("cannot start model process `{path}`: {source}")]
    Spawn {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model process did not answer within {0:?}")]
    Timeout(Duration),
    #[error("malformed reply from model process: {0}")]
    Malformed(String),
    #[error("model process returned {got} predictions for {expected} rows")]
    LengthMismatch { expected: usize, got: usize },
    #[error("model process closed its output")]
    Closed,
    #[error("bridge I/O failure: {0}")]
    Io(#[source] std::io::Error),
    #[error("bridge session is no longer usable after an earlier failure")]
    Poisoned,
}
