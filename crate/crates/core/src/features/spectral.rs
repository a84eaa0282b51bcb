//! Welch power spectral density and band-power features.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to ratio denominators, in µV².
pub const RATIO_EPSILON: f64 = 1e-12;
/// Welch segment length in seconds.
pub const SEGMENT_SECONDS: f64 = 4.0;

/// One-sided power spectral density on a uniform grid starting at 0 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Grid spacing in Hz.
    pub df: f64,
    /// µV²/Hz at `k * df`.
    pub density: Vec<f64>,
}

impl Spectrum {
    pub fn freq(&self, k: usize) -> f64 {
        k as f64 * self.df
    }

    pub fn max_freq(&self) -> f64 {
        self.freq(self.density.len().saturating_sub(1))
    }

    /// Rectangle-rule total, the discrete Parseval sum.
    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.df
    }

    fn value_at(&self, f: f64) -> f64 {
        let pos = f / self.df;
        let k = (pos.floor() as usize).min(self.density.len() - 1);
        if k + 1 >= self.density.len() {
            return self.density[k];
        }
        let t = pos - k as f64;
        self.density[k] * (1.0 - t) + self.density[k + 1] * t
    }

    /// Trapezoidal integral of the density over `[lo, hi]` Hz, interpolating
    /// linearly at edges that fall between grid points.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        let hi = hi.min(self.max_freq());
        if !(hi > lo) || self.density.len() < 2 {
            return 0.0;
        }
        let first = (lo / self.df).floor() as usize + 1;
        let mut prev_f = lo;
        let mut prev_v = self.value_at(lo);
        let mut sum = 0.0;
        let mut k = first;
        while k < self.density.len() && self.freq(k) < hi {
            let f = self.freq(k);
            let v = self.density[k];
            sum += 0.5 * (prev_v + v) * (f - prev_f);
            prev_f = f;
            prev_v = v;
            k += 1;
        }
        sum + 0.5 * (prev_v + self.value_at(hi)) * (hi - prev_f)
    }
}

/// Welch estimator: Hann-windowed segments with 50 % overlap, per-segment
/// mean removal, periodograms averaged and scaled to a one-sided density.
pub struct Welch {
    fs: f64,
    seg_len: usize,
    window: Vec<f64>,
    window_power: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl Welch {
    pub fn new(fs: f64) -> Self {
        Self::with_segment(fs, (SEGMENT_SECONDS * fs).round() as usize)
    }

    pub fn with_segment(fs: f64, seg_len: usize) -> Self {
        assert!(seg_len >= 2, "segment must hold at least 2 samples");
        // symmetric Hann keeps the estimate invariant under time reversal
        let window: Vec<f64> = (0..seg_len)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / (seg_len - 1) as f64).cos())
            .collect();
        let window_power = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(seg_len);
        Welch {
            fs,
            seg_len,
            window,
            window_power,
            fft,
        }
    }

    pub fn estimate(&self, samples: &[f64]) -> Spectrum {
        if samples.len() < self.seg_len {
            return Welch::with_segment(self.fs, samples.len().max(2)).estimate_full(samples);
        }
        self.estimate_full(samples)
    }

    fn estimate_full(&self, samples: &[f64]) -> Spectrum {
        let n = self.seg_len;
        let hop = n / 2;
        let bins = n / 2 + 1;
        let mut acc = vec![0.0; bins];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut segments = 0usize;
        let mut start = 0;
        while start + n <= samples.len() {
            let seg = &samples[start..start + n];
            let mean = seg.iter().sum::<f64>() / n as f64;
            for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex64::new((x - mean) * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
            segments += 1;
            start += hop;
        }
        let scale = 1.0 / (self.fs * self.window_power * segments.max(1) as f64);
        let density = acc
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let one_sided = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
                p * scale * one_sided
            })
            .collect();
        Spectrum {
            df: self.fs / n as f64,
            density,
        }
    }
}

/// Welch PSD of one epoch.
pub fn psd(samples: &[f64], fs: f64) -> Spectrum {
    Welch::new(fs).estimate(samples)
}

/// Frequency band in Hz, `lo` inclusive to `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandDef {
    pub lo: f64,
    pub hi: f64,
}

impl BandDef {
    pub const fn new(lo: f64, hi: f64) -> Self {
        BandDef { lo, hi }
    }
}

/// Band edges used for the spectral features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bands {
    pub delta: BandDef,
    pub theta: BandDef,
    pub alpha: BandDef,
    pub sigma: BandDef,
    pub beta: BandDef,
    pub gamma: BandDef,
    pub slow_wave: BandDef,
    /// Range integrated for total power.
    pub total: BandDef,
}

impl Default for Bands {
    fn default() -> Self {
        Bands {
            delta: BandDef::new(0.5, 4.0),
            theta: BandDef::new(4.0, 8.0),
            alpha: BandDef::new(8.0, 13.0),
            sigma: BandDef::new(12.0, 16.0),
            beta: BandDef::new(13.0, 30.0),
            gamma: BandDef::new(30.0, 45.0),
            slow_wave: BandDef::new(0.5, 2.0),
            total: BandDef::new(0.5, 45.0),
        }
    }
}

impl Bands {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("delta", self.delta),
            ("theta", self.theta),
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("slow_wave", self.slow_wave),
            ("total", self.total),
        ];
        for (name, b) in all {
            if !(0.0 <= b.lo && b.lo < b.hi && b.hi <= 64.0) {
                return Err(Error::InvalidSpec(format!("band {name} [{}, {}] Hz is invalid", b.lo, b.hi)));
            }
        }
        Ok(())
    }
}

/// The 23 spectral features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralFeatures {
    pub total_power: f64,
    pub slow_wave_power: f64,
    pub rel_delta: f64,
    pub rel_theta: f64,
    pub rel_alpha: f64,
    pub rel_sigma: f64,
    pub rel_beta: f64,
    pub rel_gamma: f64,
    pub abs_delta: f64,
    pub abs_theta: f64,
    pub abs_alpha: f64,
    pub abs_beta: f64,
    pub abs_gamma: f64,
    pub ratio_delta_theta: f64,
    pub ratio_delta_alpha: f64,
    pub ratio_delta_gamma: f64,
    pub ratio_delta_beta: f64,
    pub ratio_theta_alpha: f64,
    pub ratio_theta_gamma: f64,
    pub ratio_theta_beta: f64,
    pub ratio_alpha_gamma: f64,
    pub ratio_alpha_beta: f64,
    pub ratio_gamma_beta: f64,
}

pub fn spectral_features(spectrum: &Spectrum, bands: &Bands) -> Result<SpectralFeatures> {
    let power = |b: BandDef| spectrum.band_power(b.lo, b.hi);
    let total = power(bands.total);
    if !(total >= RATIO_EPSILON) {
        return Err(Error::DegenerateSignal(format!("total power {total:e} below floor")));
    }
    let (d, t, a, s, b, g) = (
        power(bands.delta),
        power(bands.theta),
        power(bands.alpha),
        power(bands.sigma),
        power(bands.beta),
        power(bands.gamma),
    );
    let ratio = |num: f64, den: f64| num / den.max(RATIO_EPSILON);
    Ok(SpectralFeatures {
        total_power: total,
        slow_wave_power: power(bands.slow_wave),
        rel_delta: d / total,
        rel_theta: t / total,
        rel_alpha: a / total,
        rel_sigma: s / total,
        rel_beta: b / total,
        rel_gamma: g / total,
        abs_delta: d,
        abs_theta: t,
        abs_alpha: a,
        abs_beta: b,
        abs_gamma: g,
        ratio_delta_theta: ratio(d, t),
        ratio_delta_alpha: ratio(d, a),
        ratio_delta_gamma: ratio(d, g),
        ratio_delta_beta: ratio(d, b),
        ratio_theta_alpha: ratio(t, a),
        ratio_theta_gamma: ratio(t, g),
        ratio_theta_beta: ratio(t, b),
        ratio_alpha_gamma: ratio(a, g),
        ratio_alpha_beta: ratio(a, b),
        ratio_gamma_beta: ratio(g, b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn sine(f: f64, amp: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| amp * (2.0 * PI * f * i as f64 / 128.0).sin()).collect()
    }

    fn variance(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn grid_covers_nyquist_at_quarter_hertz() {
        let s = psd(&vec![0.0; 3840], 128.0);
        assert_eq!(s.df, 0.25);
        assert_eq!(s.density.len(), 257);
        assert_eq!(s.max_freq(), 64.0);
        assert!(s.density.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn parseval_for_sines_and_noise() {
        let x = sine(10.0, 1.0, 3840);
        let s = psd(&x, 128.0);
        assert!((s.total_mass() / variance(&x) - 1.0).abs() < 0.05);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let noise: Vec<f64> = (0..3840).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = psd(&noise, 128.0);
        assert!((s.total_mass() / variance(&noise) - 1.0).abs() < 0.05);
    }

    #[test]
    fn sine_mass_is_concentrated() {
        let s = psd(&sine(10.0, 1.0, 3840), 128.0);
        let near: f64 = (0..s.density.len())
            .filter(|&k| (9.75..=10.25).contains(&s.freq(k)))
            .map(|k| s.density[k])
            .sum();
        let total: f64 = s.density.iter().sum();
        assert!(near / total >= 0.9);
    }

    #[test]
    fn white_noise_is_flat() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let noise: Vec<f64> = (0..3840).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = psd(&noise, 128.0);
        let levels: Vec<f64> = (0..16)
            .map(|b| {
                let bins: Vec<f64> = (0..s.density.len())
                    .filter(|&k| s.freq(k) >= 4.0 * b as f64 && s.freq(k) < 4.0 * (b + 1) as f64)
                    .map(|k| s.density[k])
                    .collect();
                bins.iter().sum::<f64>() / bins.len() as f64
            })
            .collect();
        let max = levels.iter().cloned().fold(f64::MIN, f64::max);
        let min = levels.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 2.0, "{levels:?}");
    }

    #[test]
    fn alpha_sine_lands_in_alpha() {
        let f = spectral_features(&psd(&sine(10.0, 1.0, 3840), 128.0), &Bands::default()).unwrap();
        assert!(f.rel_alpha >= 0.9);
        for r in [f.rel_delta, f.rel_theta, f.rel_beta, f.rel_gamma] {
            assert!(r <= 0.05);
        }
    }

    #[test]
    fn delta_beta_split() {
        let x: Vec<f64> = sine(2.0, 1.0, 3840)
            .iter()
            .zip(sine(20.0, 1.0, 3840))
            .map(|(a, b)| a + b)
            .collect();
        let f = spectral_features(&psd(&x, 128.0), &Bands::default()).unwrap();
        assert!((f.rel_delta - 0.5).abs() < 0.05);
        assert!((f.rel_beta - 0.5).abs() < 0.05);
        assert!((f.ratio_delta_beta - 1.0).abs() < 0.1);
    }

    #[test]
    fn zero_spectrum_is_degenerate() {
        let s = Spectrum {
            df: 0.25,
            density: vec![0.0; 257],
        };
        assert!(matches!(spectral_features(&s, &Bands::default()), Err(Error::DegenerateSignal(_))));
    }

    #[test]
    fn band_power_is_additive_and_interpolates() {
        let s = Spectrum {
            df: 0.25,
            density: (0..257).map(|k| 1.0 + k as f64 * 0.01).collect(),
        };
        let whole = s.band_power(0.5, 45.0);
        let parts = s.band_power(0.5, 4.1) + s.band_power(4.1, 17.3) + s.band_power(17.3, 45.0);
        assert!((whole - parts).abs() < 1e-10);
        // linear density: trapezoid is exact
        let exact = |a: f64, b: f64| (b - a) + 0.02 * (b * b - a * a);
        assert!((s.band_power(0.6, 3.9) - exact(0.6, 3.9)).abs() < 1e-10);
    }
}
