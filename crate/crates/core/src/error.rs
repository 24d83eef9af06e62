use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic at byte 0: expected \"CAPF\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported CAPF version {version} at byte 4")]
    UnsupportedVersion { version: u32 },

    #[error("truncated payload: section `{section}` starts at byte {offset}, needs {expected} bytes in total, file has {actual}")]
    Truncated {
        section: &'static str,
        offset: usize,
        expected: usize,
        actual: usize,
    },

    #[error("trailing bytes: expected {expected} bytes, file has {actual}")]
    TrailingBytes { expected: usize, actual: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid origin byte {value} at row {row} (byte offset {offset})")]
    InvalidOrigin { row: usize, value: u8, offset: usize },

    #[error("label {label} at row {row} out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: u32, classes: usize },

    #[error("row {row} has near-zero norm {norm:e} and cannot be normalized")]
    ZeroRow { row: usize, norm: f64 },

    #[error("row {row} of {context} is not unit-norm (norm {norm})")]
    Unnormalized { context: String, row: usize, norm: f64 },

    #[error("class `{class}` has {available} real shots, {requested} requested")]
    InsufficientShots {
        class: String,
        available: usize,
        requested: usize,
    },

    #[error("class `{class}` has {available} synthetic rows, {requested} requested")]
    InsufficientSynthetic {
        class: String,
        available: usize,
        requested: usize,
    },

    #[error("k_shot must be at least 2, got {0}")]
    TooFewShots(usize),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid kernel spec: {0}")]
    InvalidKernel(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("alpha > 0 requires a non-empty synthetic support set")]
    EmptySyntheticWithAlpha,

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    /// True for errors caused by bad parameters rather than bad data.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidKernel(_) | Error::InvalidConfig(_) | Error::TooFewShots(_) | Error::EmptySyntheticWithAlpha
        )
    }
}
