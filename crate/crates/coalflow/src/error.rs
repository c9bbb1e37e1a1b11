//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a precondition (negative variance, empty
    /// sample, mismatched grids, ...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A model hypothesis was violated at runtime, e.g. a branching rate
    /// that is not bounded below by a positive constant.
    #[error("model violation: {0}")]
    ModelViolation(String),

    /// A numerical routine failed; for covariance square roots the
    /// offending matrix is carried along (row-major).
    #[error("numerical error: {message}")]
    Numerical {
        message: String,
        matrix: Option<Vec<f64>>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn model(msg: impl Into<String>) -> Self {
        Error::ModelViolation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>, matrix: Option<Vec<f64>>) -> Self {
        Error::Numerical {
            message: msg.into(),
            matrix,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
