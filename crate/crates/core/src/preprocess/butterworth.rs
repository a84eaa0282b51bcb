//! Butterworth band-pass design as a cascade of second-order sections.
//!
//! The band-pass is a high-pass and a low-pass of the same order in series.
//! Each prototype is mapped to the z-plane with the bilinear transform after
//! prewarping its cutoff, so both edges sit exactly at -3 dB. Odd orders add a
//! first-order section stored as a biquad with `b2 = a2 = 0`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSpec {
    /// High-pass edge in Hz.
    pub hp_cutoff: f64,
    /// Low-pass edge in Hz.
    pub lp_cutoff: f64,
    pub order: usize,
    /// Forward-backward filtering (squares the magnitude response).
    pub zero_phase: bool,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            hp_cutoff: 0.5,
            lp_cutoff: 40.0,
            order: 7,
            zero_phase: false,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, fs: f64) -> Result<()> {
        let nyquist = fs / 2.0;
        if self.order == 0 {
            return Err(Error::InvalidSpec("order must be at least 1".into()));
        }
        if !(self.hp_cutoff > 0.0) {
            return Err(Error::InvalidSpec(format!("high-pass cutoff {} must be > 0", self.hp_cutoff)));
        }
        if !(self.hp_cutoff < self.lp_cutoff) {
            return Err(Error::InvalidSpec(format!(
                "high-pass cutoff {} must be below low-pass cutoff {}",
                self.hp_cutoff, self.lp_cutoff
            )));
        }
        if !(self.lp_cutoff < nyquist) {
            return Err(Error::InvalidSpec(format!(
                "low-pass cutoff {} must be below Nyquist {nyquist}",
                self.lp_cutoff
            )));
        }
        Ok(())
    }
}

/// One section: `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn normalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Biquad {
            b0: b[0] / a[0],
            b1: b[1] / a[0],
            b2: b[2] / a[0],
            a1: a[1] / a[0],
            a2: a[2] / a[0],
        }
    }

    pub fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b0 + z_inv * self.b1 + z2 * self.b2) / (1.0 + z_inv * self.a1 + z2 * self.a2)
    }

    /// Both poles strictly inside the unit circle (Jury conditions).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Lowpass,
    Highpass,
}

/// A designed filter; sections are applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoefficients {
    pub sections: Vec<Biquad>,
    pub zero_phase: bool,
}

impl FilterCoefficients {
    /// Complex response of one causal pass at `freq` Hz.
    pub fn response(&self, freq: f64, fs: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq / fs);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    /// Magnitude response at `freq` Hz, including the second pass when
    /// filtering is zero-phase.
    pub fn gain(&self, freq: f64, fs: f64) -> f64 {
        let g = self.response(freq, fs).norm();
        if self.zero_phase {
            g * g
        } else {
            g
        }
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(Biquad::is_stable)
    }

    /// Causal single pass, Direct Form II transposed, zero initial state.
    pub fn apply_causal(&self, input: &[f64]) -> Vec<f64> {
        let mut out = input.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for x in out.iter_mut() {
                let xin = *x;
                let y = s.b0 * xin + z1;
                z1 = s.b1 * xin - s.a1 * y + z2;
                z2 = s.b2 * xin - s.a2 * y;
                *x = y;
            }
        }
        out
    }

    /// Applies the filter as configured (causal, or forward-backward).
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let mut y = self.apply_causal(input);
        if self.zero_phase {
            y.reverse();
            y = self.apply_causal(&y);
            y.reverse();
        }
        y
    }
}

/// Designs the high-pass + low-pass cascade for `spec` at `fs`.
pub fn design_butterworth(spec: &FilterSpec, fs: f64) -> Result<FilterCoefficients> {
    spec.validate(fs)?;
    let mut sections = butterworth_sections(Kind::Highpass, spec.order, spec.hp_cutoff, fs);
    sections.extend(butterworth_sections(Kind::Lowpass, spec.order, spec.lp_cutoff, fs));
    let coeffs = FilterCoefficients {
        sections,
        zero_phase: spec.zero_phase,
    };
    if !coeffs.is_stable() {
        return Err(Error::Numerical(format!("designed filter for {spec:?} at {fs} Hz is unstable")));
    }
    Ok(coeffs)
}

fn butterworth_sections(kind: Kind, order: usize, cutoff: f64, fs: f64) -> Vec<Biquad> {
    // Prewarped analog cutoff for s = (1 - z^-1) / (1 + z^-1).
    let k = (PI * cutoff / fs).tan();
    let k2 = k * k;
    let mut sections = Vec::with_capacity(order.div_ceil(2));
    if order % 2 == 1 {
        let a = [1.0 + k, k - 1.0, 0.0];
        let b = match kind {
            Kind::Lowpass => [k, k, 0.0],
            Kind::Highpass => [1.0, -1.0, 0.0],
        };
        sections.push(Biquad::normalized(b, a));
    }
    for pair in 0..order / 2 {
        // s^2 + 2 sin(theta) s + 1 for each conjugate pole pair
        let theta = PI * (2 * pair + 1) as f64 / (2 * order) as f64;
        let damping = 2.0 * theta.sin();
        let a = [1.0 + damping * k + k2, 2.0 * (k2 - 1.0), 1.0 - damping * k + k2];
        let b = match kind {
            Kind::Lowpass => [k2, 2.0 * k2, k2],
            Kind::Highpass => [1.0, -2.0, 1.0],
        };
        sections.push(Biquad::normalized(b, a));
    }
    sections
}

#[cfg(test)]
mod tests {
    use super::*;

    /// |H| of an analog Butterworth prototype evaluated at the prewarped
    /// frequency: an independent closed form for the digital design.
    fn prototype_gain(kind: Kind, order: usize, cutoff: f64, f: f64, fs: f64) -> f64 {
        let ratio = (PI * f / fs).tan() / (PI * cutoff / fs).tan();
        let r = match kind {
            Kind::Lowpass => ratio,
            Kind::Highpass => 1.0 / ratio,
        };
        1.0 / (1.0 + r.powi(2 * order as i32)).sqrt()
    }

    #[test]
    fn sections_match_closed_form_prototype() {
        let fs = 128.0;
        for order in 1..=8 {
            for &(kind, fc) in &[(Kind::Lowpass, 40.0), (Kind::Highpass, 0.5)] {
                let coeffs = FilterCoefficients {
                    sections: butterworth_sections(kind, order, fc, fs),
                    zero_phase: false,
                };
                for &f in &[0.1, 0.5, 1.0, 4.0, 20.0, 40.0, 50.0, 63.0] {
                    let want = prototype_gain(kind, order, fc, f, fs);
                    let got = coeffs.gain(f, fs);
                    assert!((got - want).abs() < 1e-6 * want, "{kind:?} n={order} f={f}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn band_edges_are_minus_3db() {
        let c = design_butterworth(&FilterSpec::default(), 128.0).unwrap();
        let edge = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c.gain(0.5, 128.0) / edge - 1.0).abs() < 0.02);
        assert!((c.gain(40.0, 128.0) / edge - 1.0).abs() < 0.02);
        let mid = c.gain((0.5f64 * 40.0).sqrt(), 128.0);
        assert!((0.97..=1.0 + 1e-12).contains(&mid), "{mid}");
        assert!(c.gain(0.1, 128.0) < 1e-3);
    }

    #[test]
    fn stopband_at_60hz_for_200hz_sampling() {
        let c = design_butterworth(&FilterSpec::default(), 200.0).unwrap();
        assert!(c.gain(60.0, 200.0) < 0.1);
        assert!(c.gain(0.1, 200.0) < 1e-3);
    }

    #[test]
    fn all_poles_inside_unit_circle() {
        for &fs in &[100.0, 128.0, 200.0, 256.0, 512.0] {
            let c = design_butterworth(&FilterSpec::default(), fs).unwrap();
            assert_eq!(c.sections.len(), 8);
            for s in &c.sections {
                // explicit root magnitudes of z^2 + a1 z + a2
                let disc = Complex64::new(s.a1 * s.a1 - 4.0 * s.a2, 0.0).sqrt();
                for root in [(-s.a1 + disc) / 2.0, (-s.a1 - disc) / 2.0] {
                    assert!(root.norm() < 1.0, "pole {root} at fs {fs}");
                }
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = |hp, lp, order| FilterSpec {
            hp_cutoff: hp,
            lp_cutoff: lp,
            order,
            zero_phase: false,
        };
        assert!(matches!(design_butterworth(&bad(0.5, 64.0, 7), 128.0), Err(Error::InvalidSpec(_))));
        assert!(design_butterworth(&bad(0.5, 80.0, 7), 128.0).is_err());
        assert!(design_butterworth(&bad(0.0, 40.0, 7), 128.0).is_err());
        assert!(design_butterworth(&bad(10.0, 5.0, 7), 128.0).is_err());
        assert!(design_butterworth(&bad(0.5, 40.0, 0), 128.0).is_err());
    }

    #[test]
    fn zero_phase_squares_the_response() {
        let spec = FilterSpec {
            zero_phase: true,
            ..FilterSpec::default()
        };
        let c = design_butterworth(&spec, 128.0).unwrap();
        assert!((c.gain(40.0, 128.0) - 0.5).abs() < 1e-9);
    }
}
