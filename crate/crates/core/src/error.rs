use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodaError {
    /// Input outside the domain of an operation, e.g. a zero passed to a log-ratio transform.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// Caller broke an operation's preconditions (shapes, parameter ranges, basis metadata).
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("{location}: {message}")]
    Parse { location: String, message: String },
    #[error("no convergence after {iterations} iterations (last gradient norm {last:.3e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        trace: Vec<f64>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CodaError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(CodaError::Domain(msg.into()))
}

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(CodaError::Contract(msg.into()))
}
