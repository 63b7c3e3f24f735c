use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the imaging pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("quadrature spacing h = {h} is too coarse: no voxel midpoint falls inside the support")]
    EmptyQuadrature { h: f64 },

    #[error("point ({0:.6}, {1:.6}, {2:.6}) lies inside the source support")]
    PointInsideSupport(f64, f64, f64),

    #[error("singular kernel: evaluation point coincides with source point")]
    SingularKernel,

    #[error("direction ({0}, {1}, {2}) is not a unit vector")]
    NonUnitDirection(f64, f64, f64),

    #[error("frequency grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dataset kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: &'static str, found: &'static str },

    #[error("sensor index {index} out of range (dataset has {count} sensors)")]
    SensorIndex { index: usize, count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
