use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("sample {index} leaves the chart domain")]
    Domain { index: usize },
    #[error("t-trajectory from {start} leaves [{lo}, {hi}] at flow time {exit_time}")]
    Range {
        start: f64,
        exit_time: f64,
        lo: f64,
        hi: f64,
    },
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("invalid configuration at {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("point is not in the return window")]
    NotInWindow,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("model violation: {0}")]
    Model(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

impl Error {
    pub fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
