use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("pilot allocation incomplete: user {0} has no pilot resource")]
    AllocationIncomplete(usize),

    #[error("invalid pilot count tau={tau}: {reason}")]
    InvalidTau { tau: usize, reason: String },

    #[error("{candidates} candidate pilot groups exceed the cap of {cap}; use a smaller instance")]
    TooManyCandidates { candidates: u128, cap: u128 },

    #[error("solver diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used for the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::UnsupportedGeometry(_) => "unsupported_geometry",
            Error::Domain(_) => "domain",
            Error::Shape(_) => "shape",
            Error::AllocationIncomplete(_) => "allocation_incomplete",
            Error::InvalidTau { .. } => "invalid_tau",
            Error::TooManyCandidates { .. } => "too_many_candidates",
            Error::Diverged { .. } => "diverged",
            Error::Validation(_) => "validation",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
