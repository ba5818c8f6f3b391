use std::path::PathBuf;

use liftbid_core::lift::LiftError;
use liftbid_core::world::eventlog::LogError;
use liftbid_core::world::WorldError;
use thiserror::Error;

/// Failure classes, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("check failed: {0}")]
    Assertion(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Assertion(_) => 4,
            CliError::Io { .. } => 5,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<WorldError> for CliError {
    fn from(e: WorldError) -> Self {
        match e {
            WorldError::NoActions => CliError::Data(e.to_string()),
            WorldError::Config(_) | WorldError::Rejection { .. } => CliError::Config(e.to_string()),
        }
    }
}

impl From<LiftError> for CliError {
    fn from(e: LiftError) -> Self {
        match e {
            LiftError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub fn log_error(path: &std::path::Path, e: LogError) -> CliError {
    match e {
        LogError::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        LogError::Parse { .. } => CliError::Data(format!("{}: {e}", path.display())),
    }
}
