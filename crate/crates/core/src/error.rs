use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum ZcpError {
    #[error("shape mismatch at {layer}: expected {expected}, got {actual}")]
    ShapeMismatch {
        layer: String,
        expected: String,
        actual: String,
    },
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("backward called without a recorded forward pass")]
    MissingTape,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("too few users: need at least 3, got {0}")]
    TooFewUsers(usize),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("noise may only be injected into the test split (got {0})")]
    NoiseOnNonTestSplit(String),
    #[error("missing proxy column: {0}")]
    MissingProxy(String),
    #[error("degenerate value: {0}")]
    Degenerate(String),
    #[error("duplicate ledger key: {0}")]
    DuplicateKey(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("unknown experiment: {0}")]
    UnknownExperiment(String),
    #[error("pipeline stage out of order: {0}")]
    StageOrder(String),
    #[error("missing checkpoint for {0}")]
    MissingCheckpoint(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ZcpError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ZcpError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(layer: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        ZcpError::ShapeMismatch {
            layer: layer.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

pub type Result<T, E = ZcpError> = std::result::Result<T, E>;
