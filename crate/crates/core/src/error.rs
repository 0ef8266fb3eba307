use thiserror::Error;

/// Errors produced by model construction, likelihood evaluation, fitting and
/// the verification harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside the open parameter set.
    #[error("parameter `{param}` = {value} is outside its domain: {reason}")]
    Domain {
        param: String,
        value: f64,
        reason: &'static str,
    },

    /// Dimensions or experiment settings that the model cannot accept.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    /// Symmetric factorization hit a non-positive pivot.
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    /// Generic numerical failure (non-finite values, non-convergence).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Inputs of mismatched shape passed across an API boundary.
    #[error("contract violation: {0}")]
    Contract(String),

    /// No optimizer start reached the gradient tolerance.
    #[error("no start converged (best gradient norm {best_grad_norm:e})")]
    Fit { best_grad_norm: f64 },

    /// An experiment aborted because too many replications failed.
    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(param: impl Into<String>, value: f64, reason: &'static str) -> Self {
        Error::Domain {
            param: param.into(),
            value,
            reason,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
