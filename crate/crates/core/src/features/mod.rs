//! The 31 candidate features: six temporal and 23 spectral values per epoch,
//! and two sleep values per recording broadcast to each of its epochs.

mod sleep;
mod spectral;
mod temporal;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use sleep::{sleep_features, Hypnogram, SleepFeatures, Stage, STAGE_SECONDS};
pub use spectral::{psd, spectral_features, BandDef, Bands, SpectralFeatures, Spectrum, Welch, RATIO_EPSILON, SEGMENT_SECONDS};
pub use temporal::{temporal_features, zero_crossings, TemporalFeatures};

use crate::error::{Error, Result};
use crate::preprocess::{design_butterworth, FilterCoefficients, FilterSpec, Preprocessed};
use crate::Label;

pub const NUM_FEATURES: usize = 31;

macro_rules! features {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Feature identifiers in canonical column order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Feature {
            $($variant),*
        }

        impl Feature {
            pub const ALL: [Feature; NUM_FEATURES] = [$(Feature::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Feature::$variant => $name),*
                }
            }
        }
    };
}

features! {
    Mean => "MEAN",
    Std => "STD",
    Zcr => "ZCR",
    HjorthActivity => "HJORTH_ACTIVITY",
    HjorthMobility => "HJORTH_MOBILITY",
    HjorthComplexity => "HJORTH_COMPLEXITY",
    TotalPower => "TOTAL_POWER",
    SlowWavePower => "SLOW_WAVE_POWER",
    RelDelta => "REL_DELTA",
    RelTheta => "REL_THETA",
    RelAlpha => "REL_ALPHA",
    RelSigma => "REL_SIGMA",
    RelBeta => "REL_BETA",
    RelGamma => "REL_GAMMA",
    AbsDelta => "ABS_DELTA",
    AbsTheta => "ABS_THETA",
    AbsAlpha => "ABS_ALPHA",
    AbsBeta => "ABS_BETA",
    AbsGamma => "ABS_GAMMA",
    RatioDeltaTheta => "RATIO_DELTA_THETA",
    RatioDeltaAlpha => "RATIO_DELTA_ALPHA",
    RatioDeltaGamma => "RATIO_DELTA_GAMMA",
    RatioDeltaBeta => "RATIO_DELTA_BETA",
    RatioThetaAlpha => "RATIO_THETA_ALPHA",
    RatioThetaGamma => "RATIO_THETA_GAMMA",
    RatioThetaBeta => "RATIO_THETA_BETA",
    RatioAlphaGamma => "RATIO_ALPHA_GAMMA",
    RatioAlphaBeta => "RATIO_ALPHA_BETA",
    RatioGammaBeta => "RATIO_GAMMA_BETA",
    SleepEfficiency => "SLEEP_EFFICIENCY",
    TotalSleepTime => "TOTAL_SLEEP_TIME",
}

impl Feature {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn names() -> impl Iterator<Item = &'static str> {
        Feature::ALL.iter().map(|f| f.name())
    }

    pub fn is_relative(self) -> bool {
        (Feature::RelDelta..=Feature::RelGamma).contains(&self)
    }

    pub fn is_ratio(self) -> bool {
        (Feature::RatioDeltaTheta..=Feature::RatioGammaBeta).contains(&self)
    }

    /// Features that scale with the square of the signal amplitude.
    pub fn is_power(self) -> bool {
        matches!(self, Feature::HjorthActivity | Feature::TotalPower | Feature::SlowWavePower)
            || (Feature::AbsDelta..=Feature::AbsGamma).contains(&self)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Feature::ALL
            .iter()
            .copied()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Format(format!("unknown feature {s:?}")))
    }
}

/// The 31 values of one epoch, indexed by [`Feature`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub subject_id: String,
    pub epoch_index: usize,
    pub label: Option<Label>,
    pub values: [f64; NUM_FEATURES],
}

impl FeatureVector {
    pub fn get(&self, f: Feature) -> f64 {
        self.values[f.index()]
    }

    pub fn set(&mut self, f: Feature, v: f64) {
        self.values[f.index()] = v;
    }

    /// Values of `features`, in the order given.
    pub fn select(&self, features: &[Feature]) -> Vec<f64> {
        features.iter().map(|&f| self.get(f)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub bands: Bands,
    /// When set, slow-wave power counts only if the 0.5-2 Hz component of
    /// the epoch has a peak-to-peak amplitude above this many µV.
    pub slow_wave_gate_uv: Option<f64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            bands: Bands::default(),
            slow_wave_gate_uv: None,
        }
    }
}

/// Number of per-epoch features (all but the two sleep features).
pub const NUM_EPOCH_FEATURES: usize = NUM_FEATURES - 2;

/// Per-epoch feature computation at a fixed sampling rate.
pub struct FeatureExtractor {
    fs: f64,
    cfg: FeatureConfig,
    welch: Welch,
    gate: Option<(f64, FilterCoefficients)>,
}

impl FeatureExtractor {
    pub fn new(fs: f64, cfg: &FeatureConfig) -> Result<Self> {
        cfg.bands.validate()?;
        let gate = match cfg.slow_wave_gate_uv {
            Some(threshold) => {
                let spec = FilterSpec {
                    hp_cutoff: cfg.bands.slow_wave.lo,
                    lp_cutoff: cfg.bands.slow_wave.hi,
                    order: 4,
                    zero_phase: true,
                };
                Some((threshold, design_butterworth(&spec, fs)?))
            }
            None => None,
        };
        Ok(FeatureExtractor {
            fs,
            cfg: *cfg,
            welch: Welch::new(fs),
            gate,
        })
    }

    /// The 29 temporal and spectral values of one epoch, in canonical order.
    pub fn epoch_values(&self, samples: &[f64]) -> Result<[f64; NUM_EPOCH_FEATURES]> {
        let t = temporal_features(samples, self.fs)?;
        let s = spectral_features(&self.welch.estimate(samples), &self.cfg.bands)?;
        let slow_wave = match &self.gate {
            Some((threshold, filter)) => {
                let slow = filter.apply(samples);
                let (lo, hi) = slow
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
                if hi - lo > *threshold {
                    s.slow_wave_power
                } else {
                    0.0
                }
            }
            None => s.slow_wave_power,
        };
        Ok([
            t.mean,
            t.std,
            t.zcr,
            t.activity,
            t.mobility,
            t.complexity,
            s.total_power,
            slow_wave,
            s.rel_delta,
            s.rel_theta,
            s.rel_alpha,
            s.rel_sigma,
            s.rel_beta,
            s.rel_gamma,
            s.abs_delta,
            s.abs_theta,
            s.abs_alpha,
            s.abs_beta,
            s.abs_gamma,
            s.ratio_delta_theta,
            s.ratio_delta_alpha,
            s.ratio_delta_gamma,
            s.ratio_delta_beta,
            s.ratio_theta_alpha,
            s.ratio_theta_gamma,
            s.ratio_theta_beta,
            s.ratio_alpha_gamma,
            s.ratio_alpha_beta,
            s.ratio_gamma_beta,
        ])
    }
}

/// Feature vectors of one preprocessed recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub vectors: Vec<FeatureVector>,
    /// Kept epochs skipped because their features are undefined (flat
    /// signal, no power in the analysis band).
    pub degenerate: Vec<usize>,
}

/// One vector per kept, non-degenerate epoch. The hypnogram must cover the
/// recording to within one scoring epoch.
pub fn extract_all(
    recording: &Preprocessed,
    hypnogram: &Hypnogram,
    label: Option<Label>,
    cfg: &FeatureConfig,
) -> Result<Extraction> {
    if (hypnogram.duration() - recording.duration).abs() > hypnogram.epoch_seconds {
        return Err(Error::Alignment {
            hypnogram_s: hypnogram.duration(),
            recording_s: recording.duration,
        });
    }
    let sleep = sleep_features(hypnogram);
    let extractor = FeatureExtractor::new(recording.fs, cfg)?;
    let mut vectors = Vec::new();
    let mut degenerate = Vec::new();
    for epoch in recording.kept() {
        let head = match extractor.epoch_values(&epoch.samples) {
            Ok(v) => v,
            Err(Error::DegenerateSignal(_)) => {
                degenerate.push(epoch.index);
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut values = [0.0; NUM_FEATURES];
        values[..NUM_EPOCH_FEATURES].copy_from_slice(&head);
        values[Feature::SleepEfficiency.index()] = sleep.sleep_efficiency;
        values[Feature::TotalSleepTime.index()] = sleep.total_sleep_time;
        vectors.push(FeatureVector {
            subject_id: recording.subject_id.clone(),
            epoch_index: epoch.index,
            label,
            values,
        });
    }
    Ok(Extraction { vectors, degenerate })
}

/// Writes the 34-column feature table. Lines in `comments` are emitted first,
/// each prefixed with `# `.
pub fn write_feature_csv(mut w: impl Write, vectors: &[FeatureVector], comments: &[String]) -> Result<()> {
    let fmt_err = |e: std::io::Error| Error::Format(format!("writing feature CSV: {e}"));
    for c in comments {
        writeln!(w, "# {c}").map_err(fmt_err)?;
    }
    let mut wtr = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Format(format!("writing feature CSV: {e}"));
    let mut header = vec!["subject_id", "epoch_index", "label"];
    header.extend(Feature::names());
    wtr.write_record(&header).map_err(csv_err)?;
    for v in vectors {
        let mut row = vec![
            v.subject_id.clone(),
            v.epoch_index.to_string(),
            v.label.map(|l| l.as_str().to_string()).unwrap_or_default(),
        ];
        // shortest representation that parses back to the same f64
        row.extend(v.values.iter().map(|x| format!("{x:?}")));
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush().map_err(fmt_err)
}

pub fn read_feature_csv(r: impl Read) -> Result<Vec<FeatureVector>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let csv_err = |e: csv::Error| Error::Format(format!("reading feature CSV: {e}"));
    let header = rdr.headers().map_err(csv_err)?.clone();
    let expected: Vec<&str> = ["subject_id", "epoch_index", "label"]
        .into_iter()
        .chain(Feature::names())
        .collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Format("feature CSV header does not match the 31-feature layout".into()));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str| Error::Format(format!("feature CSV row {row}: bad {what}"));
        let epoch_index = rec[1].parse().map_err(|_| bad("epoch_index"))?;
        let label = match &rec[2] {
            "" => None,
            s => Some(s.parse()?),
        };
        let mut values = [0.0; NUM_FEATURES];
        for (i, v) in values.iter_mut().enumerate() {
            *v = rec[3 + i].parse().map_err(|_| bad(Feature::ALL[i].name()))?;
        }
        out.push(FeatureVector {
            subject_id: rec[0].to_string(),
            epoch_index,
            label,
            values,
        });
    }
    Ok(out)
}
