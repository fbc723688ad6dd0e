use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible allocation: {0}")]
    InfeasibleAllocation(String),

    #[error("invalid allocation ratio: {0}")]
    InvalidRatio(String),

    #[error("invalid slice spec: {0}")]
    InvalidSlice(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("inconsistent simulation state: {0}")]
    InternalState(String),

    #[error("no measurements for slice {slice_id}")]
    NoData { slice_id: usize },

    #[error("storage error: {0}")]
    Storage(String),

    #[error("could not parse allocation response ({reason}): {text}")]
    Parse { reason: String, text: String },

    #[error("decision backend timed out after {0} ms")]
    BackendTimeout(u64),

    #[error("decision backend failed: {0}")]
    Backend(String),

    #[error("unsupported problem scale: {0}")]
    UnsupportedScale(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used for the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InfeasibleAllocation(_) => "infeasible_allocation",
            Error::InvalidRatio(_) => "invalid_ratio",
            Error::InvalidSlice(_) => "invalid_slice",
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Argument(_) => "argument",
            Error::InternalState(_) => "internal_state",
            Error::NoData { .. } => "no_data",
            Error::Storage(_) => "storage",
            Error::Parse { .. } => "parse",
            Error::BackendTimeout(_) => "backend_timeout",
            Error::Backend(_) => "backend",
            Error::UnsupportedScale(_) => "unsupported_scale",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
