use thiserror::Error;

#[derive(Debug, Error)]
pub enum PollingError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unstable system: {0}")]
    Unstable(String),
    #[error("discipline at queue {queue} is not of branching type")]
    NotBranching { queue: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("point outside the closed unit bidisk: ({0}, {1})")]
    Domain(String, String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl PollingError {
    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            PollingError::Invalid(_)
            | PollingError::Config(_)
            | PollingError::NotBranching { .. }
            | PollingError::Domain(..)
            | PollingError::Io(_)
            | PollingError::Csv(_) => 1,
            PollingError::Numerical(_) | PollingError::InsufficientSamples(_) => 2,
            PollingError::Unstable(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, PollingError>;

pub(crate) fn invalid(msg: impl Into<String>) -> PollingError {
    PollingError::Invalid(msg.into())
}
