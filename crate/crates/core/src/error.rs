use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("integration diverged at t = {time:.6} s (|state| = {magnitude:e}, bound = {bound:e})")]
    IntegrationDiverged { time: f64, magnitude: f64, bound: f64 },

    #[error("record {index} has {len} samples, need more than lag {lag}")]
    RecordTooShort { index: usize, len: usize, lag: usize },

    #[error("channel layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("too few repetitions ({available}) for split fractions {fractions:?}")]
    TooFewRepetitions { available: usize, fractions: [f64; 3] },

    #[error("column {column} has zero variance in the training part")]
    DegenerateColumn { column: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("targets have zero variance")]
    DegenerateTargets,

    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),

    #[error("malformed file {path}: {message}")]
    MalformedFile { path: String, message: String },

    #[error("malformed manifest: {0}")]
    MalformedManifest(String),

    #[error("file not found: {path} ({context})")]
    FileNotFound { path: PathBuf, context: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn malformed(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::MalformedFile {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Wraps the error with a short description of what was being done.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for configuration problems (CLI exit code 1); numeric failures map to 2.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self.root(),
            Error::InvalidConfig { .. }
                | Error::FileNotFound { .. }
                | Error::MalformedFile { .. }
                | Error::MalformedManifest(_)
                | Error::Io(_)
        )
    }
}
