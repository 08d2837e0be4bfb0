use thiserror::Error;

/// Failures of a CLI run, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("blow-up: {0}")]
    BlowUp(String),
    #[error("compatibility failure: {0}")]
    Compatibility(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::BlowUp(_) => 3,
            CliError::Compatibility(_) => 4,
            CliError::Conflict(_) => 5,
            CliError::CheckFailed(_) => 6,
        }
    }
}

impl From<qsure::Error> for CliError {
    fn from(e: qsure::Error) -> Self {
        use qsure::Error as E;
        match e {
            E::BlowUp { .. } => CliError::BlowUp(e.to_string()),
            E::Conflict(_) => CliError::Conflict(e.to_string()),
            E::Io(_) | E::Csv(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
