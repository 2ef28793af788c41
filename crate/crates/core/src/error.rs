use thiserror::Error;

/// Errors produced by simulation setup, the cost calculus, and experiment I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its valid domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A configuration is structurally valid JSON but violates an invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The simulation state and a scheduled action disagree.
    #[error("inconsistent state: {0}")]
    InconsistentState(String),

    /// Malformed configuration file.
    #[error("config parse error: {0}")]
    ConfigParse(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
