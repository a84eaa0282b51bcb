use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed EDF: {0}")]
    Parse(String),

    #[error("channel {wanted:?} not found (available: {available:?})")]
    ChannelNotFound {
        wanted: String,
        available: Vec<String>,
    },

    #[error("signal {label:?} has unusable scaling: {reason}")]
    BadScaling { label: String, reason: String },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("unsupported resampling ratio {from} Hz -> {to} Hz")]
    UnsupportedRate { from: f64, to: f64 },

    #[error("invalid filter specification: {0}")]
    InvalidSpec(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("recording too short: {samples} samples, need at least {needed}")]
    TooShort { samples: usize, needed: usize },

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("hypnogram covers {hypnogram_s} s but recording lasts {recording_s} s")]
    Alignment { hypnogram_s: f64, recording_s: f64 },

    #[error("feature {0:?} is constant across the data set")]
    ConstantFeature(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no features passed the selection rules")]
    NoFeaturesSelected,

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate data set: {0}")]
    DegenerateDataset(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("incompatible model file: {0}")]
    IncompatibleModel(String),

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
