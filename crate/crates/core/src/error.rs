use std::path::PathBuf;

use thiserror::Error;

/// Every failure the toolkit reports. Variants map onto the CLI exit-code
/// classes via [`CamoError::is_precondition`].
#[derive(Debug, Error)]
pub enum CamoError {
    #[error("parameter out of domain: {0}")]
    ParamDomain(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },
    #[error("degenerate geometry: {0}")]
    Geometry(String),
    #[error("landmark {index} at ({x}, {y}) lies outside the {width}x{height} image")]
    LandmarkOutOfBounds {
        index: usize,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot decode: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model state: {0}")]
    ModelState(String),
    #[error("empty batch role: {0}")]
    EmptyBatch(&'static str),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("detector '{0}' does not expose gradients")]
    Capability(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("gate not met: {0}")]
    Gate(String),
    #[error(transparent)]
    Network(#[from] camo_nn::NnError),
}

impl CamoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Self::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Errors caused by missing or unsuitable inputs rather than a crash
    /// mid-computation.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Self::Precondition(_) | Self::Gate(_) | Self::EmptyBatch(_) | Self::Capability(_)
        )
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, CamoError>;
