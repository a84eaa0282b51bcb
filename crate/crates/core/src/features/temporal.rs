use crate::error::{Error, Result};

/// Time-domain descriptors of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalFeatures {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Sign changes per second.
    pub zcr: f64,
    pub activity: f64,
    pub mobility: f64,
    pub complexity: f64,
}

pub fn temporal_features(samples: &[f64], fs: f64) -> Result<TemporalFeatures> {
    if samples.len() < 3 {
        return Err(Error::DegenerateSignal(format!("{} samples is too short", samples.len())));
    }
    let mean = mean(samples);
    let activity = variance(samples);
    if !(activity > 0.0) {
        return Err(Error::DegenerateSignal("epoch has zero variance".into()));
    }
    let d1 = diff(samples);
    let d2 = diff(&d1);
    let var_d1 = variance(&d1);
    let var_d2 = variance(&d2);
    let mobility = (var_d1 / activity).sqrt();
    if !(var_d1 > 0.0) {
        return Err(Error::DegenerateSignal("first difference has zero variance".into()));
    }
    let complexity = (var_d2 / var_d1).sqrt() / mobility;
    Ok(TemporalFeatures {
        mean,
        std: activity.sqrt(),
        zcr: zero_crossings(samples) as f64 / (samples.len() as f64 / fs),
        activity,
        mobility,
        complexity,
    })
}

/// Counts sign changes between consecutive nonzero samples; exact zeros are
/// skipped rather than counted.
pub fn zero_crossings(samples: &[f64]) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for &x in samples {
        if x == 0.0 {
            continue;
        }
        if last != 0.0 && (x > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = x;
    }
    count
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(f: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect()
    }

    #[test]
    fn hjorth_of_a_sine() {
        let t = temporal_features(&sine(4.0, 128.0, 3840), 128.0).unwrap();
        assert!((t.activity / 0.5 - 1.0).abs() < 0.01);
        let want = 2.0 * (PI * 4.0 / 128.0).sin();
        assert!((t.mobility / want - 1.0).abs() < 0.01, "{}", t.mobility);
        assert!((t.complexity - 1.0).abs() < 0.01);
    }

    #[test]
    fn zcr_of_10hz_sine() {
        let x = sine(10.0, 128.0, 3840);
        let crossings = zero_crossings(&x) as i64;
        assert!((crossings - 600).abs() <= 1, "{crossings}");
        let t = temporal_features(&x, 128.0).unwrap();
        assert!((t.zcr - 20.0).abs() <= 1.0 / 30.0 + 1e-12);
    }

    #[test]
    fn zeros_are_not_crossings() {
        assert_eq!(zero_crossings(&[1.0, 0.0, 0.0, 1.0]), 0);
        assert_eq!(zero_crossings(&[1.0, 0.0, -1.0]), 1);
        assert_eq!(zero_crossings(&[0.0, 0.0]), 0);
    }

    #[test]
    fn constant_epoch_is_degenerate() {
        assert!(matches!(
            temporal_features(&[3.0; 100], 128.0),
            Err(Error::DegenerateSignal(_))
        ));
    }
}
