use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MrsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MrsError {
    /// A configuration value is missing, malformed or out of range.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// Singular kernel evaluated at (numerically) zero separation.
    #[error("singular Stokeslet evaluated at |r| = {distance:e}")]
    SingularEvaluation { distance: f64 },

    /// Two markers that must be distinct coincide.
    #[error("degenerate geometry: markers {first} and {second} coincide")]
    DegenerateGeometry { first: usize, second: usize },

    #[error("reconstruction failed: {0}")]
    Reconstruction(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl MrsError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        MrsError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MrsError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            MrsError::Config { .. } | MrsError::InvalidArgument(_) => 2,
            MrsError::SingularEvaluation { .. }
            | MrsError::DegenerateGeometry { .. }
            | MrsError::Reconstruction(_)
            | MrsError::NonFinite(_) => 3,
            MrsError::Io { .. } | MrsError::Csv(_) | MrsError::Json(_) => 1,
        }
    }
}
