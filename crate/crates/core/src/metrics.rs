//! Confusion-matrix metrics. Insomnia is the positive class.
//!
//! A metric whose denominator is zero is `None`, never 0.

use crate::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, tn, fp, fn_ }
    }

    /// Tallies `(truth, prediction)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (truth, pred) in pairs {
            cm.add(truth, pred);
        }
        cm
    }

    pub fn add(&mut self, truth: Label, pred: Label) {
        match (truth.is_positive(), pred.is_positive()) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// The same counts with healthy taken as the positive class.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix::new(self.tn, self.tp, self.fn_, self.fp)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Option<f64> {
    ratio(cm.tp + cm.tn, cm.total())
}

pub fn precision(cm: &ConfusionMatrix) -> Option<f64> {
    ratio(cm.tp, cm.tp + cm.fp)
}

pub fn recall(cm: &ConfusionMatrix) -> Option<f64> {
    ratio(cm.tp, cm.tp + cm.fn_)
}

pub fn f1(cm: &ConfusionMatrix) -> Option<f64> {
    let (p, r) = (precision(cm)?, recall(cm)?);
    (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
}

pub fn cohens_kappa(cm: &ConfusionMatrix) -> Option<f64> {
    let n = cm.total();
    if n == 0 {
        return None;
    }
    let (tp, tn, fp, fn_) = (cm.tp as u128, cm.tn as u128, cm.fp as u128, cm.fn_ as u128);
    let n = n as u128;
    // in integer counts: kappa = (n*agree - chance) / (n^2 - chance)
    let chance = (tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn);
    let den = n * n - chance;
    if den == 0 {
        return None;
    }
    let num = (n * (tp + tn)) as f64 - chance as f64;
    Some(num / den as f64)
}

/// All five metrics of one confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub kappa: Option<f64>,
}

impl Metrics {
    pub fn of(cm: &ConfusionMatrix) -> Self {
        Metrics {
            accuracy: accuracy(cm),
            precision: precision(cm),
            recall: recall(cm),
            f1: f1(cm),
            kappa: cohens_kappa(cm),
        }
    }
}
