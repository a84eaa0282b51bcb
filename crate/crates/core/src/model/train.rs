use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::cross_entropy;
use super::CnnModel;
use crate::error::{Error, Result};
use crate::Label;

/// One training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub subject_id: String,
    pub x: Vec<f64>,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a lower validation loss before training stops.
    pub early_stop_patience: usize,
    /// Fraction of subjects (or rows, with `epoch_split`) used for training.
    pub split: f64,
    pub seed: u64,
    /// Split rows instead of subjects. Epochs of one subject can then land
    /// on both sides.
    pub epoch_split: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-4,
            weight_decay: 0.0,
            batch_size: 1,
            max_epochs: 100,
            early_stop_patience: 10,
            split: 0.7,
            seed: 0,
            epoch_split: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate < 1.0
            && self.weight_decay >= 0.0
            && self.batch_size >= 1
            && self.max_epochs >= 1
            && self.split > 0.0
            && self.split < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("training configuration {self:?} is out of range")))
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let step = self.lr * c2.sqrt() / c1;
        let eps = self.eps * c2.sqrt();
        for ((p, &g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let g = g + self.weight_decay * *p;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            // same update as m_hat / (sqrt(v_hat) + eps), rearranged
            *p -= step * *m / (v.sqrt() + eps);
        }
    }
}

/// Indices of the training and held-out rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split: within each class, `fraction` of the subjects (at
/// least one, and leaving one out when the class has two or more) go to
/// training. With `by_rows`, rows are split the same way instead.
pub fn split_by_subject(
    subjects: &[String],
    labels: &[Label],
    fraction: f64,
    seed: u64,
    by_rows: bool,
) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_units: BTreeSet<String> = BTreeSet::new();
    for class in [Label::Healthy, Label::Insomnia] {
        let mut units: Vec<String> = if by_rows {
            (0..subjects.len())
                .filter(|&i| labels[i] == class)
                .map(|i| i.to_string())
                .collect()
        } else {
            let set: BTreeSet<&String> = subjects
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == class)
                .map(|(s, _)| s)
                .collect();
            set.into_iter().cloned().collect()
        };
        units.shuffle(&mut rng);
        let n = units.len();
        let mut k = (fraction * n as f64).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        } else {
            k = n;
        }
        train_units.extend(units.into_iter().take(k));
    }
    let (train, test) = (0..subjects.len()).partition(|&i| {
        let unit = if by_rows { i.to_string() } else { subjects[i].clone() };
        train_units.contains(&unit)
    });
    Split { train, test }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub rows: Vec<HistoryRow>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
}

fn one_hot(label: Label) -> [f64; 2] {
    let mut y = [0.0; 2];
    y[label.class_index()] = 1.0;
    y
}

/// Mean loss and accuracy of `model` on `data`.
pub fn evaluate(model: &CnnModel, data: &[Sample]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut hits = 0usize;
    for s in data {
        let tr = model.forward_trace(&s.x)?;
        loss += cross_entropy(&tr.logits, &one_hot(s.label));
        let pred = Label::from_class_index(usize::from(tr.probs[1] > tr.probs[0]));
        hits += usize::from(pred == s.label);
    }
    let n = data.len().max(1) as f64;
    Ok((loss / n, hits as f64 / n))
}

/// Trains a fresh model on `train`, monitoring `val` for early stopping, and
/// returns the parameters from the epoch with the lowest validation loss
/// (training loss when `val` is empty). Deterministic for a given seed.
pub fn train(train: &[Sample], val: &[Sample], cfg: &TrainConfig) -> Result<(CnnModel, History)> {
    cfg.validate()?;
    let classes: BTreeMap<Label, usize> = train.iter().fold(BTreeMap::new(), |mut m, s| {
        *m.entry(s.label).or_insert(0) += 1;
        m
    });
    if classes.len() < 2 {
        return Err(Error::DegenerateDataset(format!(
            "training data has {} class(es); both are needed",
            classes.len()
        )));
    }
    let width = train[0].x.len();
    let mut model = CnnModel::new(width, cfg.seed)?;
    let mut adam = Adam::new(model.params.len(), cfg.learning_rate, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5DEE_CE66_D1CE_5EED);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = vec![0.0; model.params.len()];
    let mut history = History::default();
    let mut best = (f64::INFINITY, model.params.clone());
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let s = &train[i];
                let target = one_hot(s.label);
                let tr = model.forward_trace(&s.x)?;
                loss_sum += cross_entropy(&tr.logits, &target);
                hits += usize::from((tr.probs[1] > tr.probs[0]) == s.label.is_positive());
                model.backward_into(&tr, &target, &mut grad);
            }
            if batch.len() > 1 {
                let k = 1.0 / batch.len() as f64;
                grad.iter_mut().for_each(|g| *g *= k);
            }
            adam.step(&mut model.params, &grad);
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical(format!("parameters diverged in epoch {epoch}")));
        }
        let n = train.len() as f64;
        let (train_loss, train_acc) = (loss_sum / n, hits as f64 / n);
        let (val_loss, val_acc) = if val.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&model, val)?;
            (Some(l), Some(a))
        };
        history.rows.push(HistoryRow {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        });
        let monitored = val_loss.unwrap_or(train_loss);
        if monitored < best.0 {
            best = (monitored, model.params.clone());
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }
    model.params = best.1;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Points at distance >= 1 from the hyperplane `sum(x) = 0`, labelled by side.
    fn separable(seed: u64, n: usize) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = 1.0 / 20f64.sqrt();
        (0..n)
            .map(|i| {
                let label = Label::from_class_index(i % 2);
                let mut x: Vec<f64> = (0..20).map(|_| StandardNormal.sample(&mut rng)).collect();
                let proj: f64 = x.iter().sum::<f64>() * normal;
                let side = if label.is_positive() { 1.0 } else { -1.0 };
                let want = side * rng.gen_range(1.0..2.0);
                x.iter_mut().for_each(|v| *v += (want - proj) * normal);
                Sample {
                    subject_id: format!("s{i}"),
                    x,
                    label,
                }
            })
            .collect()
    }

    fn quick(max_epochs: usize) -> TrainConfig {
        TrainConfig {
            max_epochs,
            early_stop_patience: max_epochs,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(3, 0.1, 0.0);
        let mut p = vec![1.0, 1.0, 1.0];
        adam.step(&mut p, &[2.0, -0.5, 0.0]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] - 1.1).abs() < 1e-6);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn adam_matches_textbook_form() {
        let mut adam = Adam::new(1, 0.01, 0.0);
        let (mut m, mut v) = (0.0, 0.0);
        let mut p = [0.3];
        let mut q = 0.3;
        for t in 1..=50 {
            let g = (t as f64 * 0.7).sin();
            adam.step(&mut p, &[g]);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let (mh, vh) = (m / (1.0 - 0.9f64.powi(t)), v / (1.0 - 0.999f64.powi(t)));
            q -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p[0] - q).abs() < 1e-12);
    }

    #[test]
    fn separable_set_is_learned() {
        let data = separable(1, 200);
        let (model, history) = train(&data, &[], &quick(30)).unwrap();
        let (_, acc) = evaluate(&model, &data).unwrap();
        assert_eq!(acc, 1.0);
        assert!(history.rows.last().unwrap().train_loss < history.rows[0].train_loss);
    }

    #[test]
    fn shuffled_labels_stay_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut data = separable(2, 300);
        let mut labels: Vec<Label> = data.iter().map(|s| s.label).collect();
        labels.shuffle(&mut rng);
        data.iter_mut().zip(labels).for_each(|(s, l)| s.label = l);
        let ids: Vec<String> = data.iter().map(|s| s.subject_id.clone()).collect();
        let labels: Vec<Label> = data.iter().map(|s| s.label).collect();
        let split = split_by_subject(&ids, &labels, 0.7, 3, false);
        let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
        let (tr, va) = (pick(&split.train), pick(&split.test));
        let (model, _) = train(&tr, &va, &quick(10)).unwrap();
        let (_, acc) = evaluate(&model, &va).unwrap();
        assert!((0.35..=0.65).contains(&acc), "{acc}");
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable(3, 40);
        let a = train(&data, &data[..10], &quick(3)).unwrap();
        let b = train(&data, &data[..10], &quick(3)).unwrap();
        assert_eq!(a.0.params, b.0.params);
        assert_eq!(a.1, b.1);
        let other = TrainConfig { seed: 6, ..quick(3) };
        assert_ne!(train(&data, &[], &other).unwrap().0.params, a.0.params);
    }

    #[test]
    fn single_class_is_rejected() {
        let data: Vec<Sample> = separable(4, 20).into_iter().filter(|s| s.label == Label::Healthy).collect();
        assert!(matches!(train(&data, &[], &quick(1)), Err(Error::DegenerateDataset(_))));
    }

    #[test]
    fn early_stopping_keeps_best_epoch() {
        let data = separable(5, 60);
        let cfg = TrainConfig {
            max_epochs: 40,
            early_stop_patience: 2,
            seed: 1,
            ..TrainConfig::default()
        };
        let (model, history) = train(&data[..40], &data[40..], &cfg).unwrap();
        let best = history.rows[history.best_epoch - 1].val_loss.unwrap();
        assert!(history.rows.iter().all(|r| r.val_loss.unwrap() >= best));
        let (val_loss, _) = evaluate(&model, &data[40..]).unwrap();
        assert!((val_loss - best).abs() < 1e-12);
    }

    #[test]
    fn split_is_by_subject_and_stratified() {
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        for s in 0..20 {
            for _ in 0..5 {
                ids.push(format!("p{s}"));
                labels.push(Label::from_class_index(s % 2));
            }
        }
        let split = split_by_subject(&ids, &labels, 0.7, 9, false);
        let side = |idx: &[usize]| idx.iter().map(|&i| ids[i].clone()).collect::<BTreeSet<_>>();
        let (a, b) = (side(&split.train), side(&split.test));
        assert!(a.is_disjoint(&b));
        assert_eq!((a.len(), b.len()), (14, 6));
        let insomnia_train = a.iter().filter(|s| s[1..].parse::<usize>().unwrap() % 2 == 1).count();
        assert_eq!(insomnia_train, 7);
        assert_eq!(split, split_by_subject(&ids, &labels, 0.7, 9, false));

        let rows = split_by_subject(&ids, &labels, 0.7, 9, true);
        assert_eq!(rows.train.len(), 70);
        assert!(!side(&rows.train).is_disjoint(&side(&rows.test)));
    }
}
