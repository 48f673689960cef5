use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("wrong IDX magic: expected {expected:#010x}, found {found:#010x}")]
    WrongMagic { expected: u32, found: u32 },
    #[error("truncated payload: header declares {declared} bytes, {available} available")]
    TruncatedPayload { declared: usize, available: usize },
    #[error("label {label} at index {index} is outside [0, 9]")]
    LabelOutOfRange { index: usize, label: u8 },
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad checkpoint magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    CorruptArray(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,
    #[error("bernoulli decoder target {value} outside [0, 1]")]
    BernoulliTargetOutOfRange { value: f64 },
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },
    #[error("operation not supported for decoder kind {0}")]
    UnsupportedKind(&'static str),
    #[error("wrong model kind: expected {expected}, found {found}")]
    WrongModelKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("non-positive value {value} in row {row}")]
    NonPositiveValue { row: usize, value: f64 },
    #[error("empty request: {0}")]
    EmptyRequest(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
    let path = path.into();
    move |source| Error::IoFailure { path, source }
}
