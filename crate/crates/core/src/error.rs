use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("episode already finished with status {0}")]
    EpisodeFinished(crate::environment::Status),

    #[error("not enough transitions to sample: have {available}, need {requested}")]
    InsufficientSamples { available: usize, requested: usize },

    #[error("config: unknown key `{0}`")]
    UnknownConfigKey(String),

    #[error("config: bad value for `{key}`: {reason}")]
    BadConfigValue { key: String, reason: String },

    #[error("config line {line}: {reason}")]
    ConfigSyntax { line: usize, reason: String },

    #[error("checkpoint truncated: {0}")]
    CheckpointTruncated(String),

    #[error("checkpoint has bad magic bytes {0:?}")]
    CheckpointMagic([u8; 4]),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint payload hash mismatch: metadata says {expected}, payload hashes to {actual}")]
    CheckpointHash { expected: String, actual: String },

    #[error("checkpoint metadata: {0}")]
    CheckpointMetadata(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
