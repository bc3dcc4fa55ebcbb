use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("exact enumeration supports at most {max} players, got {n}")]
    PlayerCountExceeded { n: usize, max: usize },

    #[error("Monte-Carlo estimation needs at least 2 samples, got {0}")]
    InsufficientSamples(usize),

    #[error("value function returned a non-normal value {value} for coalition {coalition:#x}")]
    InvalidValue { coalition: u64, value: f64 },

    #[error("value function failed on coalition {coalition:#x}: {source}")]
    ValueFunction {
        coalition: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("feature grouping mismatch: {0}")]
    GroupingMismatch(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("invalid bin count: {0}")]
    InvalidBinCount(String),

    #[error("{0} features exceed the 64-player coalition width")]
    TooManyFeatures(usize),

    #[error("image has no known latent provenance and no exemplar within tolerance")]
    UnknownImage,

    #[error("sprite latent out of range: {0}")]
    LatentOutOfRange(String),

    #[error("top-half counts have {distinct} distinct values, need at least {classes}")]
    DegenerateClusters { distinct: usize, classes: usize },

    #[error("model returned an invalid probability vector: {0}")]
    BadProbabilities(String),

    #[error("protocol error (request {id:?}): {message}")]
    Protocol { id: Option<u64>, message: String },

    #[error("child process exited: {0}")]
    ProcessExited(String),

    #[error("timed out after {0:?} waiting for child process")]
    Timeout(std::time::Duration),

    #[error("operation requires a Fourier codec")]
    CodecMismatch,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("image file {path}: {message}")]
    ImageFile { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn protocol(id: Option<u64>, msg: impl Into<String>) -> Self {
        Error::Protocol {
            id,
            message: msg.into(),
        }
    }

    /// Strips coalition context to reach the underlying failure.
    pub fn root(&self) -> &Error {
        match self {
            Error::ValueFunction { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_)
            | Error::CodecMismatch
            | Error::EmptyDataset
            | Error::InvalidBinCount(_)
            | Error::TooManyFeatures(_)
            | Error::GroupingMismatch(_)
            | Error::ShapeMismatch { .. }
            | Error::PlayerCountExceeded { .. }
            | Error::InsufficientSamples(_)
            | Error::ImageFile { .. } => 2,
            Error::Protocol { .. } | Error::ProcessExited(_) | Error::Timeout(_) | Error::BadProbabilities(_) => 3,
            _ => 1,
        }
    }
}
