//! Per-class descriptive statistics of hypnogram-derived sleep parameters.

use insomnia_eeg::features::{sleep_features, Hypnogram, Stage};
use insomnia_eeg::{Error, Label};

#[derive(Debug, Clone, PartialEq)]
pub struct StatRow {
    pub class: Label,
    pub parameter: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single subject.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Parameter names and values of one hypnogram: SE (%), TST (s), then
/// seconds spent in each stage.
pub fn parameters(h: &Hypnogram) -> Vec<(String, f64)> {
    let s = sleep_features(h);
    let mut out = vec![
        ("SLEEP_EFFICIENCY".to_string(), s.sleep_efficiency),
        ("TOTAL_SLEEP_TIME".to_string(), s.total_sleep_time),
    ];
    for stage in Stage::ALL {
        out.push((format!("{}_SECONDS", stage.as_str()), h.stage_seconds(stage)));
    }
    out
}

/// Rows grouped by class (healthy first), parameters in [`parameters`] order.
pub fn sleep_stats(subjects: &[(Label, Hypnogram)]) -> Result<Vec<StatRow>, Error> {
    let mut rows = Vec::new();
    for class in [Label::Healthy, Label::Insomnia] {
        let members: Vec<Vec<(String, f64)>> = subjects
            .iter()
            .filter(|(l, _)| *l == class)
            .map(|(_, h)| parameters(h))
            .collect();
        if members.is_empty() {
            return Err(Error::InsufficientData(format!("no {class} hypnograms")));
        }
        let n = members.len();
        for (k, (name, _)) in members[0].iter().enumerate() {
            let xs: Vec<f64> = members.iter().map(|m| m[k].1).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            rows.push(StatRow {
                class,
                parameter: name.clone(),
                n,
                mean,
                std,
                min: xs.iter().copied().fold(f64::INFINITY, f64::min),
                max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    Ok(rows)
}
