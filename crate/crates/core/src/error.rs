use thiserror::Error;

use crate::addr::DomainId;

/// Errors raised by cache models, metrics and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("offset {offset} out of range for region of {size} lines")]
    OffsetOutOfRange { offset: u64, size: u64 },

    #[error("domain {0} is not configured for this cache")]
    UnknownDomain(DomainId),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("eviction set construction failed: {0}")]
    Construction(String),

    #[error("eviction probability {best:.3} below target {target:.3} after exhausting {supplied} addresses")]
    SupplyExhausted {
        best: f64,
        target: f64,
        supplied: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
