use std::path::Path;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("estimation error: {0}")]
    Estimation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Estimation(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    /// A data-pipeline stage failure, prefixed with the stage name.
    pub fn stage(stage: &str, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{stage}: {err}"))
    }

    pub fn estimation(stage: &str, err: impl std::fmt::Display) -> Self {
        CliError::Estimation(format!("{stage}: {err}"))
    }

    pub fn unreadable_config(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Config(format!("cannot read {}: {err}", path.display()))
    }

    pub fn unreadable_data(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("cannot read {}: {err}", path.display()))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
