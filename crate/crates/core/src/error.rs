use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A requested method is not available for the model dimension.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Numerical blow-up during path integration.
    #[error("integration blew up at step {step} (|x| = {magnitude:e})")]
    Integration { step: usize, magnitude: f64 },
    /// The dynamic-programming state space exceeded its budget.
    #[error("state space too large: {states} states at stage {stage} (limit {limit})")]
    StateBudget {
        stage: usize,
        states: usize,
        limit: usize,
    },
    /// Malformed model file or cache.
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
