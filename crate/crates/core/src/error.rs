use std::path::PathBuf;

use thiserror::Error;

use crate::data::Channel;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("input is empty")]
    EmptyInput,

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: cannot parse {column} value `{value}`")]
    Parse { row: usize, column: String, value: String },

    #[error("row {row}: {reason}")]
    Validation { row: usize, reason: String },

    #[error("channel {channel} is constant; cannot normalize")]
    DegenerateRange { channel: Channel },

    #[error("channel {0} is not available")]
    UnknownChannel(Channel),

    #[error("insufficient data: need at least {needed} rows, got {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("insufficient history: need {needed} {what}, got {available}")]
    InsufficientHistory {
        what: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("invalid lag set: {0}")]
    InvalidLag(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("{0}")]
    Domain(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("all {restarts} restarts diverged")]
    AllRestartsDiverged { restarts: usize },

    #[error("correlation undefined: {0} has zero variance")]
    ZeroVariance(&'static str),

    #[error("target at index {index} is zero; relative divergence undefined")]
    ZeroTarget { index: usize },

    #[error("model and data are incompatible: {0}")]
    ConfigMismatch(String),

    #[error("no usable sweep row: every grid point diverged")]
    NoViableRow,
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Divergence,
    Mismatch,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Diverged { .. } | Error::AllRestartsDiverged { .. } | Error::NoViableRow => ErrorKind::Divergence,
            Error::ConfigMismatch(_) => ErrorKind::Mismatch,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }
}
