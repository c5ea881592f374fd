use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Every likelihood in a weight computation was zero (or not a number).
    #[error("degenerate weights: all {count} log-likelihoods are -inf or NaN")]
    DegenerateWeights { count: usize },

    #[error("filter failed at step {step}: {source}")]
    StepFailure {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Step index of a [`Error::StepFailure`], if any.
    pub fn failed_step(&self) -> Option<usize> {
        match self {
            Error::StepFailure { step, .. } => Some(*step),
            _ => None,
        }
    }
}
