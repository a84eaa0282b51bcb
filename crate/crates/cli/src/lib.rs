//! Batch pipeline behind the `insomnia-eeg` command: one function per stage,
//! each reading the files its upstream stage wrote under the output directory.

pub mod config;
pub mod output;
pub mod pipeline;
pub mod sleepstats;

pub use config::{ChannelSel, PipelineConfig};
pub use pipeline::{Layout, Stage};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A stage ran before the one producing its inputs.
    #[error("{0}")]
    StageOrder(String),

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] insomnia_eeg::Error),

    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// Stable name for the machine-readable error line.
    pub fn kind(&self) -> &'static str {
        use insomnia_eeg::Error as E;
        match self {
            CliError::StageOrder(_) => "StageOrderError",
            CliError::Config(_) => "ConfigError",
            CliError::Io(_) => "IoError",
            CliError::Core(e) => match e {
                E::Io { .. } => "IoError",
                E::Parse(_) => "ParseError",
                E::ChannelNotFound { .. } => "ChannelNotFound",
                E::BadScaling { .. } => "BadScaling",
                E::InvalidSignal(_) => "InvalidSignal",
                E::UnsupportedRate { .. } => "UnsupportedRate",
                E::InvalidSpec(_) => "InvalidSpec",
                E::Numerical(_) => "NumericalError",
                E::TooShort { .. } => "TooShort",
                E::DegenerateSignal(_) => "DegenerateSignal",
                E::Alignment { .. } => "AlignmentError",
                E::ConstantFeature(_) => "ConstantFeature",
                E::InsufficientData(_) => "InsufficientData",
                E::NoFeaturesSelected => "NoFeaturesSelected",
                E::Shape(_) => "ShapeError",
                E::DegenerateDataset(_) => "DegenerateDataset",
                E::NoData(_) => "NoData",
                E::IncompatibleModel(_) => "IncompatibleModel",
                E::Format(_) => "FormatError",
            },
        }
    }

    /// `{"error":"<kind>","message":"..."}`
    pub fn json_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }

    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
