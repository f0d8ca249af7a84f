use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error("{source_name}:{line}: unknown stop {stop:?}")]
    UnknownStopRef {
        source_name: String,
        line: u64,
        stop: String,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("unknown stop {0:?}")]
    UnknownStop(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("plan leg {from} -> {to} is not an edge of the graph")]
    MissingLeg { from: String, to: String },

    #[error("unknown agent {0}")]
    UnknownAgent(u32),

    #[error("group size must be at least 1")]
    EmptyGroup,

    #[error("invalid cost model: {0}")]
    InvalidCostModel(String),

    #[error("initial plans have zero total cost")]
    ZeroInitialCost,

    #[error("inconsistent joint plan: {0}")]
    Inconsistent(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("config error for key {key:?}: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
