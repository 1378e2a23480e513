use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing prerequisite: {0}")]
    Prerequisite(String),
    #[error("provenance mismatch: {0}")]
    Provenance(String),
    #[error("failure threshold exceeded: {0}")]
    Threshold(String),
    #[error(transparent)]
    Internal(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Prerequisite(_) => 3,
            CliError::Provenance(_) => 4,
            CliError::Threshold(_) => 5,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<piece_core::Error> for CliError {
    fn from(e: piece_core::Error) -> Self {
        CliError::Internal(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
