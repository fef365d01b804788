use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("length error: requested {requested} timesteps from a trajectory of {available}")]
    Length { requested: usize, available: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("corrupt header in {path}: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },

    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("unsupported format version {found} in {path} (expected {expected})")]
    Version {
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Param(_) => 2,
            Error::CorruptHeader { .. }
            | Error::Truncated { .. }
            | Error::Version { .. }
            | Error::Data(_)
            | Error::Dimension(_)
            | Error::Length { .. }
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_) => 3,
            Error::NonFinite { .. } => 4,
            Error::RejectedInput(_) | Error::Contract(_) => 1,
        }
    }
}
