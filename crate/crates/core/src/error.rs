use std::path::PathBuf;

use thiserror::Error;

use crate::params::Family;

/// Errors raised anywhere in the estimation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("undefined moment: {0}")]
    UndefinedMoment(String),

    #[error("family {0} is not supported for this operation")]
    UnsupportedFamily(Family),

    #[error("component {component} is degenerate (responsibility mass {mass:e})")]
    DegenerateComponent { component: usize, mass: f64 },

    #[error("fitting failed: all {restarts} restarts degenerate ({})", diagnostics.join("; "))]
    FitFailed {
        restarts: usize,
        diagnostics: Vec<String>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("missing data file: expected {}", .0.display())]
    MissingData(PathBuf),

    #[error("checksum mismatch for {}: expected {expected}, found {found}", path.display())]
    Checksum {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
