use std::path::PathBuf;

use thiserror::Error;

use crate::data::VisitKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid response at {key}: {message}")]
    InvalidResponse { key: VisitKey, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("metric kind mismatch: expected {expected}, found {found}")]
    MetricMismatch { expected: String, found: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("feature schema mismatch: expected {expected} features, got {got}")]
    SchemaMismatch { expected: usize, got: usize },

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("undefined correlation: hour {hour} has zero variance")]
    UndefinedCorrelation { hour: usize },

    #[error("transport solver did not converge after {0} pivots")]
    SolverDidNotConverge(usize),

    #[error("unknown key {0}")]
    UnknownKey(VisitKey),

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("unsupported ensemble version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("corrupt file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::InvalidResponse { .. } => "invalid_response",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::MetricMismatch { .. } => "metric_mismatch",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::SchemaMismatch { .. } => "schema_mismatch",
            Error::DegenerateWeights(_) => "degenerate_weights",
            Error::UndefinedCorrelation { .. } => "undefined_correlation",
            Error::SolverDidNotConverge(_) => "solver",
            Error::UnknownKey(_) => "unknown_key",
            Error::EmptyCandidates => "empty_candidates",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Corrupt { .. } => "corrupt",
        }
    }
}
