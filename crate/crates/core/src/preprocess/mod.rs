//! Signal conditioning: resample, band-pass, segment into overlapping
//! epochs, flag out-of-range epochs, and remove each kept epoch's DC offset.

mod butterworth;

use serde::{Deserialize, Serialize};

pub use butterworth::{design_butterworth, Biquad, FilterCoefficients, FilterSpec};

use crate::edf_io::{resample, Channel, Recording};
use crate::error::{Error, Result};
use crate::Label;

/// Pipeline rate all recordings are resampled to.
pub const TARGET_FS: f64 = 128.0;
pub const EPOCH_SECONDS: f64 = 30.0;
pub const EPOCH_OVERLAP: f64 = 0.5;
/// Epochs whose absolute amplitude exceeds this are rejected.
pub const CLIP_UV: f64 = 260.0;

/// One analysis window of a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub subject_id: String,
    pub channel: Channel,
    pub index: usize,
    /// Start of the window in seconds from the recording start.
    pub offset: f64,
    pub fs: f64,
    pub samples: Vec<f64>,
    pub rejected: bool,
    pub label: Option<Label>,
}

impl Epoch {
    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Band-pass filters a recording.
pub fn filter_signal(recording: &Recording, spec: &FilterSpec) -> Result<Recording> {
    let coeffs = design_butterworth(spec, recording.fs)?;
    let samples = coeffs.apply(&recording.samples);
    if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("filter output not finite at sample {i}")));
    }
    Ok(recording.with_samples(samples))
}

/// Cuts `recording` into windows of `epoch_len` seconds starting every
/// `epoch_len * (1 - overlap)` seconds. A trailing remainder shorter than one
/// hop is dropped.
pub fn segment(recording: &Recording, epoch_len: f64, overlap: f64) -> Result<Vec<Epoch>> {
    if !(epoch_len > 0.0) || !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidSpec(format!(
            "epoch length {epoch_len} s with overlap {overlap} is not a valid segmentation"
        )));
    }
    let len = (epoch_len * recording.fs).round() as usize;
    let hop = ((len as f64) * (1.0 - overlap)).round() as usize;
    let n = recording.samples.len();
    if len == 0 || hop == 0 {
        return Err(Error::InvalidSpec(format!("epoch of {len} samples with hop {hop}")));
    }
    if n < len {
        return Err(Error::TooShort { samples: n, needed: len });
    }
    let count = (n - len) / hop + 1;
    Ok((0..count)
        .map(|k| Epoch {
            subject_id: recording.subject_id.clone(),
            channel: recording.channel,
            index: k,
            offset: (k * hop) as f64 / recording.fs,
            fs: recording.fs,
            samples: recording.samples[k * hop..k * hop + len].to_vec(),
            rejected: false,
            label: None,
        })
        .collect())
}

/// Flags every epoch whose peak absolute amplitude is strictly above
/// `threshold_uv`. Samples are never modified. Returns the number flagged.
pub fn reject_artifacts(epochs: &mut [Epoch], threshold_uv: f64) -> usize {
    let mut flagged = 0;
    for e in epochs.iter_mut() {
        e.rejected = e.max_abs() > threshold_uv;
        flagged += usize::from(e.rejected);
    }
    flagged
}

/// Removes the epoch's mean. No variance scaling happens at signal level.
pub fn normalize_epoch(mut epoch: Epoch) -> Epoch {
    // second pass picks up the rounding residue of the first
    for _ in 0..2 {
        let mean = mean(&epoch.samples);
        epoch.samples.iter_mut().for_each(|x| *x -= mean);
    }
    epoch
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub target_fs: f64,
    pub filter: FilterSpec,
    pub clip_uv: f64,
    pub epoch_seconds: f64,
    pub overlap: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_fs: TARGET_FS,
            filter: FilterSpec::default(),
            clip_uv: CLIP_UV,
            epoch_seconds: EPOCH_SECONDS,
            overlap: EPOCH_OVERLAP,
        }
    }
}

/// Epochs of one recording after the full conditioning chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub subject_id: String,
    pub channel: Channel,
    pub fs: f64,
    /// Duration of the source recording in seconds.
    pub duration: f64,
    /// All epochs in order; rejected ones are flagged and left unnormalized.
    pub epochs: Vec<Epoch>,
}

impl Preprocessed {
    pub fn kept(&self) -> impl Iterator<Item = &Epoch> {
        self.epochs.iter().filter(|e| !e.rejected)
    }
}

/// Runs resample -> filter -> segment -> reject -> normalize.
pub fn preprocess(recording: &Recording, cfg: &PreprocessConfig) -> Result<Preprocessed> {
    let resampled = resample(recording, cfg.target_fs)?;
    let filtered = filter_signal(&resampled, &cfg.filter)?;
    let epochs = condition_filtered(&filtered, cfg)?;
    Ok(Preprocessed {
        subject_id: recording.subject_id.clone(),
        channel: recording.channel,
        fs: filtered.fs,
        duration: recording.duration(),
        epochs,
    })
}

/// The segment -> reject -> normalize tail of the chain, for a signal that is
/// already resampled and filtered.
pub fn condition_filtered(filtered: &Recording, cfg: &PreprocessConfig) -> Result<Vec<Epoch>> {
    let mut epochs = segment(filtered, cfg.epoch_seconds, cfg.overlap)?;
    reject_artifacts(&mut epochs, cfg.clip_uv);
    Ok(epochs
        .into_iter()
        .map(|e| if e.rejected { e } else { normalize_epoch(e) })
        .collect())
}
