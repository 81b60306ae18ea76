use camo_core::CamoError;
use thiserror::Error;

/// Command failures grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Precondition(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Precondition(_) => 3,
            Self::Runtime(_) => 4,
        }
    }

    pub fn missing(what: &str, path: &std::path::Path, producer: &str) -> Self {
        Self::Precondition(format!(
            "{what} not found at {}; produce it with `camo {producer}` or point the config at an existing file",
            path.display()
        ))
    }
}

impl From<CamoError> for CliError {
    fn from(e: CamoError) -> Self {
        let msg = e.to_string();
        if e.is_config() {
            Self::Config(msg)
        } else if e.is_precondition()
            || matches!(
                e,
                CamoError::Checkpoint(_) | CamoError::Decode { .. } | CamoError::LandmarkOutOfBounds { .. }
            )
        {
            Self::Precondition(msg)
        } else {
            Self::Runtime(msg)
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
