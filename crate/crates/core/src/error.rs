use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("degenerate heading: body x-axis is within {tolerance} of vertical")]
    DegenerateHeading { tolerance: f64 },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("aliasing: consecutive attitudes differ by {angle} rad (>= pi)")]
    Aliasing { angle: f64 },
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("unsupported sampling rate {rate} Hz (minimum {minimum} Hz)")]
    UnsupportedRate { rate: f64, minimum: f64 },
    #[error("model contract violated: {0}")]
    ModelContract(String),
    #[error("non-finite value in gradient of `{param}`")]
    NumericOverflow { param: String },
    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDiverged { epoch: usize, reason: String },
    #[error("weight file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::CorruptFile {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
