//! Rational polyphase resampling with a Kaiser-windowed sinc anti-alias filter.

use std::f64::consts::PI;

use super::Recording;
use crate::error::{Error, Result};

/// Largest numerator or denominator accepted for the rate ratio.
pub const MAX_RATIO_TERM: usize = 10_000;

/// Zero crossings of the prototype sinc kept on each side of its centre.
const ZERO_CROSSINGS: usize = 24;
/// Kaiser shape parameter; about 86 dB of stopband attenuation.
const KAISER_BETA: f64 = 8.6;

/// Expresses `to / from` as `up / down` in lowest terms.
pub fn rational_ratio(from: f64, to: f64) -> Result<(usize, usize)> {
    let unsupported = || Error::UnsupportedRate { from, to };
    if !(from > 0.0 && to > 0.0 && from.is_finite() && to.is_finite()) {
        return Err(unsupported());
    }
    let x = to / from;
    // Continued-fraction convergents h/k of x.
    let (mut h_prev, mut h) = (1u128, x.floor() as u128);
    let (mut k_prev, mut k) = (0u128, 1u128);
    let mut frac = x - x.floor();
    loop {
        if h as usize > MAX_RATIO_TERM || k as usize > MAX_RATIO_TERM {
            return Err(unsupported());
        }
        if h > 0 && ((h as f64 / k as f64) - x).abs() <= 1e-12 * x {
            return Ok((h as usize, k as usize));
        }
        if frac < 1e-15 {
            return Err(unsupported());
        }
        let inv = 1.0 / frac;
        let a = inv.floor();
        frac = inv - a;
        let a = a as u128;
        (h_prev, h) = (h, a * h + h_prev);
        (k_prev, k) = (k, a * k + k_prev);
    }
}

/// A designed resampler for one `up / down` ratio.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: usize,
    down: usize,
    half_len: usize,
    /// Filter taps at the upsampled rate, index `k + half_len` for lag `k`.
    taps: Vec<f64>,
}

impl Resampler {
    pub fn new(up: usize, down: usize) -> Self {
        assert!(up > 0 && down > 0);
        let m = up.max(down);
        let half_len = ZERO_CROSSINGS * m;
        let i0_beta = bessel_i0(KAISER_BETA);
        let mut taps: Vec<f64> = (0..=2 * half_len)
            .map(|i| {
                let k = i as f64 - half_len as f64;
                let r = k / half_len as f64;
                let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
                sinc(k / m as f64) * window
            })
            .collect();
        // Unit DC gain per output sample: each output sees 1/up of the taps.
        let sum: f64 = taps.iter().sum();
        let scale = up as f64 / sum;
        taps.iter_mut().for_each(|t| *t *= scale);
        Resampler {
            up,
            down,
            half_len,
            taps,
        }
    }

    pub fn ratio(&self) -> (usize, usize) {
        (self.up, self.down)
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len * self.up).div_ceil(self.down)
    }

    /// Resamples `input`, treating samples outside it as zero. Output sample
    /// `m` is aligned with time `m / target_fs`.
    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        let n = input.len() as i64;
        let (up, down, half) = (self.up as i64, self.down as i64, self.half_len as i64);
        (0..self.output_len(input.len()) as i64)
            .map(|m| {
                let centre = m * down;
                let lo = (centre - half).div_euclid(up) + i64::from((centre - half).rem_euclid(up) != 0);
                let lo = lo.max(0);
                let hi = (centre + half).div_euclid(up).min(n - 1);
                (lo..=hi)
                    .map(|i| input[i as usize] * self.taps[(centre - i * up + half) as usize])
                    .sum()
            })
            .collect()
    }
}

/// Band-limited rational resampling of a recording to `target_fs`.
pub fn resample(recording: &Recording, target_fs: f64) -> Result<Recording> {
    let (up, down) = rational_ratio(recording.fs, target_fs)?;
    if up == down {
        return Ok(recording.clone());
    }
    let samples = Resampler::new(up, down).process(&recording.samples);
    Ok(Recording {
        fs: target_fs,
        samples,
        ..recording.clone()
    })
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}
