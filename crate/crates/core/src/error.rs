use thiserror::Error;

use crate::problem::Violation;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("infeasible schedule: {0}")]
    Infeasible(Violation),

    #[error("{what} out of range: {value} not in [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("lambert W domain error: {0} < -1/e")]
    LambertDomain(f64),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("policy error at step {step}: {reason}")]
    Policy { step: usize, reason: String },

    #[error("invalid forecast: {0}")]
    InvalidForecast(String),

    #[error("{0}")]
    Config(String),

    #[error("{path}: {message}")]
    Data { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn data(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors that come from a numerical solver rather than bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Error::NonConvergence { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
