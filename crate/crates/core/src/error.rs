use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the planning library and the benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate region: endpoints coincide")]
    DegenerateRegion,

    #[error("degenerate direction: points coincide")]
    DegenerateDirection,

    #[error("invalid polyline: {0}")]
    InvalidPolyline(String),

    #[error("invalid scene: {field}: {message}")]
    InvalidScene { field: String, message: String },

    #[error("free space not found after {attempts} rejection attempts")]
    FreeSpaceNotFound { attempts: u64 },

    #[error("{which} configuration is in collision")]
    EndpointInCollision { which: &'static str },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("no unattempted (node, milestone) pair is available")]
    NoCandidates,

    #[error("configuration is not a node of the global tree")]
    NotInTree,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("unsupported dimension {0} (only 2-D scenes can be rendered)")]
    UnsupportedDimension(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
