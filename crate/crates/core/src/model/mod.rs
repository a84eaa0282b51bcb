//! One-dimensional CNN over a selected feature vector.
//!
//! Layer plan for an input of width `w`:
//!
//! | layer | kind                     | output        |
//! |-------|--------------------------|---------------|
//! | 1     | conv 32 × width 3        | 32 × (w−2)    |
//! | 2     | conv 32 × width 2        | 32 × (w−3)    |
//! | 3     | max-pool 2, stride 2     | 32 × ⌊(w−3)/2⌋ |
//! | 4     | conv 128 × width 1       | 128 × …       |
//! | 5     | max-pool                 |               |
//! | 6     | conv 256 × width 1       |               |
//! | 7     | max-pool                 |               |
//! | 8     | flatten                  |               |
//! | 9–11  | dense 512, 128, 2        |               |
//!
//! For `w = 20` the outputs are 18, 17, 8, 8, 4, 4, 2, 512, 512, 128, 2.
//! Width 40 (two channels side by side) is the only other accepted input.
//! Hidden layers use ReLU; the output is a softmax over (healthy, insomnia).

mod io;
pub mod layers;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use io::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{evaluate, split_by_subject, train, Adam, History, HistoryRow, Sample, Split, TrainConfig};

use crate::error::{Error, Result};
use crate::Label;
use layers::*;

/// Input widths the layer plan is defined for.
pub const SUPPORTED_WIDTHS: [usize; 2] = [20, 40];

const CONV1: (usize, usize) = (32, 3);
const CONV2: (usize, usize) = (32, 2);
const CONV3: (usize, usize) = (128, 1);
const CONV4: (usize, usize) = (256, 1);
const DENSE1: usize = 512;
const DENSE2: usize = 128;
const CLASSES: usize = 2;

/// Shape of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Sizes of every layer, derived from the input width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPlan {
    pub input_width: usize,
    /// Per-channel lengths after conv1, conv2, pool, conv3, pool, conv4, pool.
    pub lengths: [usize; 7],
    pub flatten: usize,
    pub tensors: Vec<TensorSpec>,
}

impl LayerPlan {
    pub fn new(input_width: usize) -> Result<Self> {
        if !SUPPORTED_WIDTHS.contains(&input_width) {
            return Err(Error::Shape(format!(
                "input width {input_width} is not supported (expected one of {SUPPORTED_WIDTHS:?})"
            )));
        }
        let l1 = input_width - CONV1.1 + 1;
        let l2 = l1 - CONV2.1 + 1;
        let l3 = l2 / 2;
        let l4 = l3;
        let l5 = l4 / 2;
        let l6 = l5;
        let l7 = l6 / 2;
        let flatten = CONV4.0 * l7;
        let shapes: [(&'static str, Vec<usize>); 14] = [
            ("conv1.weight", vec![CONV1.0, 1, CONV1.1]),
            ("conv1.bias", vec![CONV1.0]),
            ("conv2.weight", vec![CONV2.0, CONV1.0, CONV2.1]),
            ("conv2.bias", vec![CONV2.0]),
            ("conv3.weight", vec![CONV3.0, CONV2.0, CONV3.1]),
            ("conv3.bias", vec![CONV3.0]),
            ("conv4.weight", vec![CONV4.0, CONV3.0, CONV4.1]),
            ("conv4.bias", vec![CONV4.0]),
            ("dense1.weight", vec![DENSE1, flatten]),
            ("dense1.bias", vec![DENSE1]),
            ("dense2.weight", vec![DENSE2, DENSE1]),
            ("dense2.bias", vec![DENSE2]),
            ("dense3.weight", vec![CLASSES, DENSE2]),
            ("dense3.bias", vec![CLASSES]),
        ];
        let mut offset = 0;
        let tensors = shapes
            .into_iter()
            .map(|(name, shape)| {
                let t = TensorSpec { name, shape, offset };
                offset += t.len();
                t
            })
            .collect();
        Ok(LayerPlan {
            input_width,
            lengths: [l1, l2, l3, l4, l5, l6, l7],
            flatten,
            tensors,
        })
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(TensorSpec::len).sum()
    }

    /// Output size of each layer as listed in the layer table: per-channel
    /// length for the conv and pool stages, vector length afterwards.
    pub fn output_sizes(&self) -> [usize; 11] {
        let l = self.lengths;
        [l[0], l[1], l[2], l[3], l[4], l[5], l[6], self.flatten, DENSE1, DENSE2, CLASSES]
    }

    /// Text form of the plan; its digest identifies compatible model files.
    pub fn descriptor(&self) -> String {
        let mut s = format!("cnn-v1;input=1x{}", self.input_width);
        for t in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(usize::to_string).collect();
            s.push_str(&format!(";{}={}", t.name, dims.join("x")));
        }
        s.push_str(";pool=max2s2floor;act=relu;out=softmax");
        s
    }

    pub fn checksum(&self) -> u64 {
        let digest = Sha256::digest(self.descriptor().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

/// Every intermediate of one forward pass, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub input: Vec<f64>,
    pub z1: Vec<f64>,
    pub a1: Vec<f64>,
    pub z2: Vec<f64>,
    pub a2: Vec<f64>,
    pub p2: Vec<f64>,
    pub i2: Vec<usize>,
    pub z3: Vec<f64>,
    pub a3: Vec<f64>,
    pub p3: Vec<f64>,
    pub i3: Vec<usize>,
    pub z4: Vec<f64>,
    pub a4: Vec<f64>,
    pub p4: Vec<f64>,
    pub i4: Vec<usize>,
    pub z5: Vec<f64>,
    pub a5: Vec<f64>,
    pub z6: Vec<f64>,
    pub a6: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Trace {
    /// Per-layer output sizes actually produced by this pass.
    pub fn output_sizes(&self) -> [usize; 11] {
        [
            self.a1.len() / CONV1.0,
            self.a2.len() / CONV2.0,
            self.p2.len() / CONV2.0,
            self.a3.len() / CONV3.0,
            self.p3.len() / CONV3.0,
            self.a4.len() / CONV4.0,
            self.p4.len() / CONV4.0,
            self.p4.len(),
            self.a5.len(),
            self.a6.len(),
            self.probs.len(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub plan: LayerPlan,
    /// All parameter tensors back to back, in plan order.
    pub params: Vec<f64>,
    pub seed: u64,
}

impl CnnModel {
    /// He-uniform weights, zero biases.
    pub fn new(input_width: usize, seed: u64) -> Result<Self> {
        let plan = LayerPlan::new(input_width)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; plan.num_params()];
        for t in &plan.tensors {
            if t.shape.len() == 1 {
                continue;
            }
            let fan_in: usize = t.shape[1..].iter().product();
            let limit = (6.0 / fan_in as f64).sqrt();
            for p in &mut params[t.range()] {
                *p = rng.gen_range(-limit..limit);
            }
        }
        Ok(CnnModel { plan, params, seed })
    }

    pub fn zeros(input_width: usize) -> Result<Self> {
        let plan = LayerPlan::new(input_width)?;
        let params = vec![0.0; plan.num_params()];
        Ok(CnnModel { plan, params, seed: 0 })
    }

    pub fn input_width(&self) -> usize {
        self.plan.input_width
    }

    pub fn tensor(&self, i: usize) -> &[f64] {
        &self.params[self.plan.tensors[i].range()]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.plan.input_width {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.plan.input_width
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("input feature {i} is not finite")));
        }
        Ok(())
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let t = |i| self.tensor(i);
        let z1 = conv1d_forward(x, 1, t(0), t(1), CONV1.1);
        let a1 = relu(&z1);
        let z2 = conv1d_forward(&a1, CONV1.0, t(2), t(3), CONV2.1);
        let a2 = relu(&z2);
        let (p2, i2) = maxpool2_forward(&a2, CONV2.0);
        let z3 = conv1d_forward(&p2, CONV2.0, t(4), t(5), CONV3.1);
        let a3 = relu(&z3);
        let (p3, i3) = maxpool2_forward(&a3, CONV3.0);
        let z4 = conv1d_forward(&p3, CONV3.0, t(6), t(7), CONV4.1);
        let a4 = relu(&z4);
        let (p4, i4) = maxpool2_forward(&a4, CONV4.0);
        let z5 = dense_forward(&p4, t(8), t(9));
        let a5 = relu(&z5);
        let z6 = dense_forward(&a5, t(10), t(11));
        let a6 = relu(&z6);
        let logits = dense_forward(&a6, t(12), t(13));
        let probs = softmax(&logits);
        Ok(Trace {
            input: x.to_vec(),
            z1,
            a1,
            z2,
            a2,
            p2,
            i2,
            z3,
            a3,
            p3,
            i3,
            z4,
            a4,
            p4,
            i4,
            z5,
            a5,
            z6,
            a6,
            logits,
            probs,
        })
    }

    /// Class probabilities `[p_healthy, p_insomnia]`.
    pub fn forward(&self, x: &[f64]) -> Result<[f64; 2]> {
        let p = self.forward_trace(x)?.probs;
        Ok([p[0], p[1]])
    }

    /// Cross-entropy of `target` (a distribution over the two classes).
    pub fn loss(&self, x: &[f64], target: &[f64; 2]) -> Result<f64> {
        Ok(cross_entropy(&self.forward_trace(x)?.logits, target))
    }

    /// Gradient of the cross-entropy loss with respect to every parameter
    /// (same layout as `params`) and to the input.
    pub fn backward(&self, trace: &Trace, target: &[f64; 2]) -> (Vec<f64>, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let dx = self.backward_into(trace, target, &mut grad);
        (grad, dx)
    }

    /// Like [`backward`](Self::backward) but adds into `grad`.
    pub fn backward_into(&self, tr: &Trace, target: &[f64; 2], grad: &mut [f64]) -> Vec<f64> {
        let specs = &self.plan.tensors;
        let w = |i: usize| &self.params[specs[i].range()];
        // split the flat gradient into per-tensor slices
        let mut parts: Vec<&mut [f64]> = Vec::with_capacity(specs.len());
        let mut rest = grad;
        for s in specs {
            let (head, tail) = rest.split_at_mut(s.len());
            parts.push(head);
            rest = tail;
        }
        let [g0, g1, g2, g3, g4, g5, g6, g7, g8, g9, g10, g11, g12, g13]: [&mut [f64]; 14] =
            parts.try_into().expect("14 tensors");

        let dlogits: Vec<f64> = tr.probs.iter().zip(target).map(|(p, y)| p - y).collect();
        let da6 = dense_backward(&tr.a6, w(12), &dlogits, g12, g13);
        let dz6 = relu_backward(&tr.z6, &da6);
        let da5 = dense_backward(&tr.a5, w(10), &dz6, g10, g11);
        let dz5 = relu_backward(&tr.z5, &da5);
        let dp4 = dense_backward(&tr.p4, w(8), &dz5, g8, g9);
        let da4 = maxpool2_backward(&dp4, &tr.i4, tr.a4.len());
        let dz4 = relu_backward(&tr.z4, &da4);
        let dp3 = conv1d_backward(&tr.p3, CONV3.0, w(6), CONV4.1, &dz4, g6, g7);
        let da3 = maxpool2_backward(&dp3, &tr.i3, tr.a3.len());
        let dz3 = relu_backward(&tr.z3, &da3);
        let dp2 = conv1d_backward(&tr.p2, CONV2.0, w(4), CONV3.1, &dz3, g4, g5);
        let da2 = maxpool2_backward(&dp2, &tr.i2, tr.a2.len());
        let dz2 = relu_backward(&tr.z2, &da2);
        let da1 = conv1d_backward(&tr.a1, CONV1.0, w(2), CONV2.1, &dz2, g2, g3);
        let dz1 = relu_backward(&tr.z1, &da1);
        conv1d_backward(&tr.input, 1, w(0), CONV1.1, &dz1, g0, g1)
    }
}

/// Mean class probabilities over a subject's epochs and the resulting label.
/// Insomnia wins only if its mean probability exceeds healthy's by at least
/// 1e-12; anything closer is a tie and resolves to healthy.
pub fn predict_subject(model: &CnnModel, epochs: &[Vec<f64>]) -> Result<(Label, f64)> {
    if epochs.is_empty() {
        return Err(Error::NoData("subject has no kept epochs".into()));
    }
    let mut probs = Vec::with_capacity(epochs.len());
    for x in epochs {
        probs.push(model.forward(x)?);
    }
    Ok(aggregate(&probs))
}

/// Averages per-epoch `[p_healthy, p_insomnia]` pairs; returns the label and
/// the mean insomnia probability.
pub fn aggregate(probs: &[[f64; 2]]) -> (Label, f64) {
    let n = probs.len() as f64;
    let healthy = probs.iter().map(|p| p[0]).sum::<f64>() / n;
    let insomnia = probs.iter().map(|p| p[1]).sum::<f64>() / n;
    let label = if insomnia - healthy >= 1e-12 {
        Label::Insomnia
    } else {
        Label::Healthy
    };
    (label, insomnia)
}
