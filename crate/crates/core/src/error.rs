use thiserror::Error;

/// One pair of seeing measures whose solutions disagree on a path.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConflictDetail {
    pub path_id: String,
    pub first: String,
    pub second: String,
    pub deviation: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid volatility spec: {0}")]
    InvalidSpec(String),

    #[error("invalid measure family: {0}")]
    InvalidFamily(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown coefficient set `{0}`")]
    UnknownCoefficients(String),

    #[error("solution blew up at step {step}{}", path.as_deref().map(|p| format!(" on path {p}")).unwrap_or_default())]
    BlowUp { step: usize, path: Option<String> },

    #[error("{} conflicting solution(s) while patching", .0.len())]
    Conflict(Vec<ConflictDetail>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Attach a path label to a blow-up error; other variants pass through.
    pub fn on_path(self, label: impl Into<String>) -> Self {
        match self {
            Error::BlowUp { step, path: None } => Error::BlowUp { step, path: Some(label.into()) },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
