use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("io error: {0}")]
    RawIo(#[from] io::Error),

    #[error("unsupported PNM magic number {0:?}")]
    UnsupportedMagic(String),

    #[error("malformed PNM header: {0}")]
    MalformedHeader(String),

    #[error("truncated PNM payload: expected {expected} samples, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("image too small: {0}")]
    ImageTooSmall(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("input is not L1-normalized (sum = {0})")]
    NotNormalized(f64),

    #[error("all-zero histogram cannot be normalized")]
    ZeroHistogram,

    #[error("unequal histogram masses: {0} vs {1}")]
    UnequalMass(f64, f64),

    #[error("unknown measure id {0:?}")]
    UnknownMeasure(String),

    #[error("unknown kernel id {0:?}")]
    UnknownKernel(String),

    #[error("not enough distinct points: need {needed}, have {have}")]
    NotEnoughPoints { needed: usize, have: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid label {0:?}")]
    InvalidLabel(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by user-supplied data or configuration, as opposed to
    /// bugs or environment failures.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::RawIo(_))
    }
}
