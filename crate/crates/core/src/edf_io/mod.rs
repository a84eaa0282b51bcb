//! EDF ingestion: header model, channel extraction, writing, and rational
//! resampling to the pipeline rate.
//!
//! Only plain EDF is handled. EDF+ annotation signals are parsed as ordinary
//! signal headers and skipped unless their label is asked for explicitly.

mod header;
mod read;
mod resample;
mod write;

use std::fmt;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

pub use header::{EdfHeader, SignalHeader};
pub use read::{read_edf, read_edf_header};
pub use resample::{rational_ratio, resample, Resampler};
pub use write::{write_edf, write_edf_signals};

use crate::error::Error;

/// Scalp electrode a recording was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Fp2,
    C4,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::Fp2, Channel::C4];

    pub fn label(self) -> &'static str {
        match self {
            Channel::Fp2 => "Fp2",
            Channel::C4 => "C4",
        }
    }

    /// True when an EDF signal label names this electrode.
    ///
    /// Matching is case-insensitive, ignores an `EEG ` prefix and any
    /// referential suffix, so `"C4-A1"`, `"EEG C4-M1"` and `"c4"` all match C4.
    pub fn matches_label(self, label: &str) -> bool {
        label_matches(label, self.label())
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Format(format!("unknown channel {s:?}")))
    }
}

pub(crate) fn label_matches(label: &str, wanted: &str) -> bool {
    let mut l = label.trim();
    if l.len() > 4 && l[..4].eq_ignore_ascii_case("eeg ") {
        l = l[4..].trim_start();
    }
    let electrode = l
        .split(|c: char| c == '-' || c == '/' || c.is_whitespace())
        .next()
        .unwrap_or("");
    electrode.eq_ignore_ascii_case(wanted.trim())
}

/// One channel of physically scaled EEG (µV).
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub channel: Channel,
    /// Sampling rate in Hz.
    pub fs: f64,
    pub samples: Vec<f64>,
    pub start_date: NaiveDate,
    pub start_time: NaiveTime,
}

impl Recording {
    pub fn new(subject_id: impl Into<String>, channel: Channel, fs: f64, samples: Vec<f64>) -> Self {
        Recording {
            subject_id: subject_id.into(),
            channel,
            fs,
            samples,
            start_date: NaiveDate::from_ymd_opt(2001, 1, 1).expect("valid date"),
            start_time: NaiveTime::from_hms_opt(22, 0, 0).expect("valid time"),
        }
    }

    /// Length in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Recording {
            samples,
            ..self.clone()
        }
    }
}
