//! Insomnia screening from a single EEG channel.
//!
//! The crate covers the whole chain from an overnight EDF recording to a
//! healthy/insomnia decision:
//!
//! * [`edf_io`] reads and writes EDF and resamples to 128 Hz,
//! * [`preprocess`] band-passes, segments into 30 s epochs with 50 % overlap,
//!   rejects out-of-range epochs and removes DC,
//! * [`features`] computes 31 temporal, spectral and sleep features per epoch,
//! * [`select`] z-scores features and ranks them with Welch's t-test and the
//!   point-biserial correlation,
//! * [`model`] is a small 1D CNN trained with Adam,
//! * [`metrics`] turns predictions into accuracy, precision, recall, F1 and
//!   Cohen's kappa,
//! * [`synth`] generates labelled synthetic cohorts with known spectral
//!   contrasts, so every stage can be checked without clinical data.
//!
//! The guide in `book/` walks through each stage; its code listings are
//! compiled and run as doctests.

pub mod edf_io;
pub mod error;
pub mod features;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod select;
pub mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};

/// Diagnostic class. Insomnia is the positive class throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Healthy,
    Insomnia,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Insomnia
    }

    /// Output-unit index used by the classifier.
    pub fn class_index(self) -> usize {
        match self {
            Label::Healthy => 0,
            Label::Insomnia => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Self {
        if i == 0 {
            Label::Healthy
        } else {
            Label::Insomnia
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Healthy => "healthy",
            Label::Insomnia => "insomnia",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "healthy" | "control" | "0" => Ok(Label::Healthy),
            "insomnia" | "ins" | "1" => Ok(Label::Insomnia),
            other => Err(Error::Format(format!("unknown label {other:?}"))),
        }
    }
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/edf.md")]
    mod edf {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
