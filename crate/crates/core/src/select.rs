//! Feature z-scoring and statistical feature selection.
//!
//! Every feature is tested for a class difference with Welch's t-test and
//! correlated with the class label (point-biserial). Two rules sort features
//! into tiers: `top` needs a small p-value and a strong correlation, `optimal`
//! accepts a looser p-value and a moderate correlation. Both also need `|t|`
//! above the two-sided critical value at `alpha_top`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::features::{Feature, FeatureVector, NUM_FEATURES};
use crate::Label;

/// The 20 features used as CNN input, in canonical order.
pub const FIXED_SET: [Feature; 20] = [
    Feature::Mean,
    Feature::Zcr,
    Feature::HjorthMobility,
    Feature::HjorthComplexity,
    Feature::TotalPower,
    Feature::SlowWavePower,
    Feature::RelDelta,
    Feature::RelSigma,
    Feature::RelBeta,
    Feature::RelGamma,
    Feature::RatioDeltaTheta,
    Feature::RatioDeltaAlpha,
    Feature::RatioDeltaGamma,
    Feature::RatioDeltaBeta,
    Feature::RatioThetaAlpha,
    Feature::RatioThetaBeta,
    Feature::RatioAlphaGamma,
    Feature::RatioAlphaBeta,
    Feature::SleepEfficiency,
    Feature::TotalSleepTime,
];

/// Columns whose spread is below this (relative to their magnitude, with a
/// floor of 1) count as constant.
pub const CONSTANT_TOLERANCE: f64 = 1e-10;

/// Per-feature mean and population standard deviation of a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScore {
    pub mean: [f64; NUM_FEATURES],
    pub std: [f64; NUM_FEATURES],
    /// Constant columns; they normalize to 0.
    pub constant: [bool; NUM_FEATURES],
}

impl ZScore {
    pub fn fit(vectors: &[FeatureVector]) -> Result<Self> {
        if vectors.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "z-scoring needs at least 2 vectors, got {}",
                vectors.len()
            )));
        }
        let n = vectors.len() as f64;
        let mut mean = [0.0; NUM_FEATURES];
        let mut std = [0.0; NUM_FEATURES];
        let mut constant = [false; NUM_FEATURES];
        for i in 0..NUM_FEATURES {
            let m = vectors.iter().map(|v| v.values[i]).sum::<f64>() / n;
            let var = vectors.iter().map(|v| (v.values[i] - m).powi(2)).sum::<f64>() / n;
            let scale = vectors.iter().fold(1.0f64, |s, v| s.max(v.values[i].abs()));
            mean[i] = m;
            std[i] = var.sqrt();
            constant[i] = !(std[i] > CONSTANT_TOLERANCE * scale);
        }
        Ok(ZScore { mean, std, constant })
    }

    pub fn constant_features(&self) -> Vec<Feature> {
        Feature::ALL.iter().copied().filter(|f| self.constant[f.index()]).collect()
    }

    /// Fails with [`Error::ConstantFeature`] naming the first constant column
    /// among `features`.
    pub fn require_variable(&self, features: &[Feature]) -> Result<()> {
        match features.iter().find(|f| self.constant[f.index()]) {
            Some(f) => Err(Error::ConstantFeature(f.name().into())),
            None => Ok(()),
        }
    }

    pub fn apply(&self, v: &FeatureVector) -> FeatureVector {
        let mut out = v.clone();
        for i in 0..NUM_FEATURES {
            out.values[i] = if self.constant[i] {
                0.0
            } else {
                (v.values[i] - self.mean[i]) / self.std[i]
            };
        }
        out
    }

    pub fn apply_all(&self, vectors: &[FeatureVector]) -> Vec<FeatureVector> {
        vectors.iter().map(|v| self.apply(v)).collect()
    }
}

/// Fits a [`ZScore`] on `vectors` and applies it to them.
pub fn znormalize(vectors: &[FeatureVector]) -> Result<(Vec<FeatureVector>, ZScore)> {
    let z = ZScore::fit(vectors)?;
    Ok((z.apply_all(vectors), z))
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Welch's two-sample t statistic and Welch-Satterthwaite degrees of freedom.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "t-test needs 2 values per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if !(se2 > 0.0) || !se2.is_finite() {
        return Err(Error::InsufficientData("both groups have zero variance".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok((t, dof))
}

/// Two-sided tail probability of Student's t with `dof` degrees of freedom.
pub fn p_value(t: f64, dof: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(dof / 2.0, 0.5, dof / (dof + t * t)).clamp(0.0, 1.0)
}

/// Two-sided critical value: `P(|T| > t_crit) = alpha`.
pub fn t_crit(alpha: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - alpha / 2.0)
}

/// Pearson correlation of `x` with the labels coded healthy 0, insomnia 1.
pub fn point_biserial(x: &[f64], labels: &[Label]) -> Result<f64> {
    assert_eq!(x.len(), labels.len());
    let n = x.len() as f64;
    let positives = labels.iter().filter(|l| l.is_positive()).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::InsufficientData("correlation with the class needs both classes".into()));
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = positives as f64 / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, l) in x.iter().zip(labels) {
        let dx = xi - mx;
        let dy = l.class_index() as f64 - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0) {
        return Err(Error::ConstantFeature("correlated column".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Top,
    Optimal,
    Rejected,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Top => "top",
            Tier::Optimal => "optimal",
            Tier::Rejected => "rejected",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "top" => Ok(Tier::Top),
            "optimal" => Ok(Tier::Optimal),
            "rejected" => Ok(Tier::Rejected),
            other => Err(Error::Format(format!("unknown tier {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub feature: Feature,
    pub t_stat: f64,
    pub dof: f64,
    pub p_value: f64,
    pub r_pb: f64,
    pub tier: Tier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub alpha_top: f64,
    pub p_optimal: f64,
    pub r_top: f64,
    pub r_optimal: f64,
    /// Feed the fixed 20-feature set to the model instead of the rule output.
    pub use_fixed_set: bool,
    /// Compute statistics over one mean row per subject instead of all epochs.
    pub per_subject_means: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            alpha_top: 0.05,
            p_optimal: 0.70,
            r_top: 0.5,
            r_optimal: 0.3,
            use_fixed_set: true,
            per_subject_means: false,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.alpha_top
            && self.alpha_top <= self.p_optimal
            && self.p_optimal <= 1.0
            && 0.0 <= self.r_optimal
            && self.r_optimal <= self.r_top
            && self.r_top <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("selection thresholds {self:?} are out of order")))
        }
    }

    pub fn tier(&self, t: f64, dof: f64, p: f64, r: f64) -> Tier {
        let significant = t.abs() > t_crit(self.alpha_top, dof);
        if significant && p < self.alpha_top && r.abs() >= self.r_top {
            Tier::Top
        } else if significant && p < self.p_optimal && r.abs() >= self.r_optimal {
            Tier::Optimal
        } else {
            Tier::Rejected
        }
    }
}

/// One row per subject holding the mean of each feature over its epochs.
pub fn subject_means(vectors: &[FeatureVector]) -> Vec<FeatureVector> {
    let mut groups: BTreeMap<&str, (Option<Label>, Vec<&FeatureVector>)> = BTreeMap::new();
    for v in vectors {
        groups.entry(&v.subject_id).or_insert((v.label, Vec::new())).1.push(v);
    }
    groups
        .into_iter()
        .map(|(id, (label, rows))| {
            let mut values = [0.0; NUM_FEATURES];
            for r in &rows {
                for (acc, x) in values.iter_mut().zip(&r.values) {
                    *acc += x;
                }
            }
            values.iter_mut().for_each(|x| *x /= rows.len() as f64);
            FeatureVector {
                subject_id: id.to_string(),
                epoch_index: 0,
                label,
                values,
            }
        })
        .collect()
}

/// Statistics of every non-constant feature, in canonical order, with tiers
/// assigned by `cfg`. Constant features are returned separately.
pub fn feature_stats(vectors: &[FeatureVector], cfg: &SelectionConfig) -> Result<(Vec<FeatureStats>, Vec<Feature>)> {
    cfg.validate()?;
    let owned;
    let rows = if cfg.per_subject_means {
        owned = subject_means(vectors);
        &owned[..]
    } else {
        vectors
    };
    let labels: Vec<Label> = rows
        .iter()
        .map(|v| {
            v.label
                .ok_or_else(|| Error::InsufficientData(format!("vector of {} has no label", v.subject_id)))
        })
        .collect::<Result<_>>()?;
    let z = ZScore::fit(rows)?;
    let mut stats = Vec::new();
    for f in Feature::ALL {
        if z.constant[f.index()] {
            continue;
        }
        let column: Vec<f64> = rows.iter().map(|v| v.get(f)).collect();
        let (healthy, insomnia): (Vec<(f64, Label)>, Vec<(f64, Label)>) =
            column.iter().copied().zip(labels.iter().copied()).partition(|(_, l)| !l.is_positive());
        let a: Vec<f64> = insomnia.iter().map(|p| p.0).collect();
        let b: Vec<f64> = healthy.iter().map(|p| p.0).collect();
        let (t, dof) = match welch_t(&a, &b) {
            // constant within each class but not overall: perfect separation
            Err(Error::InsufficientData(_)) if a.len() >= 2 && b.len() >= 2 => {
                let gap = a[0] - b[0];
                (gap.signum() * f64::INFINITY, (a.len() + b.len() - 2) as f64)
            }
            other => other?,
        };
        let p = p_value(t, dof);
        let r = point_biserial(&column, &labels)?;
        stats.push(FeatureStats {
            feature: f,
            t_stat: t,
            dof,
            p_value: p,
            r_pb: r,
            tier: cfg.tier(t, dof, p, r),
        });
    }
    Ok((stats, z.constant_features()))
}

/// Features passing the rules (top and optimal tiers) in canonical order, or
/// the fixed 20-feature set when `use_fixed_set` is on.
pub fn apply_rules(stats: &[FeatureStats], cfg: &SelectionConfig) -> Result<Vec<Feature>> {
    if cfg.use_fixed_set {
        return Ok(FIXED_SET.to_vec());
    }
    let mut selected: Vec<Feature> = stats
        .iter()
        .filter(|s| s.tier != Tier::Rejected)
        .map(|s| s.feature)
        .collect();
    selected.sort();
    if selected.is_empty() {
        return Err(Error::NoFeaturesSelected);
    }
    Ok(selected)
}
