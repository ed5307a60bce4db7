use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("clip too short: {samples} samples, need at least {needed} for one frame")]
    TooShort { samples: usize, needed: usize },

    #[error("{what} of {ms} ms is not a whole number of samples at {sample_rate} Hz")]
    FractionalSamples {
        what: &'static str,
        ms: f64,
        sample_rate: u32,
    },

    #[error("unsupported wav {path}: {reason}")]
    WavFormat { path: PathBuf, reason: String },

    #[error("SNR undefined: {0} has zero power over the mixing span")]
    DegenerateMix(&'static str),

    #[error("invalid mixing span: {0}")]
    InvalidSpan(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("threshold fit needs both clean and noisy examples")]
    SingleClass,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training failed on utterance {id}: {source}")]
    Training {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
