//! Central-difference gradient oracle for the CNN.
//!
//! The loss after nudging one parameter is recomputed by pushing only the
//! activations that change through the network; everything else comes from
//! one cached forward pass. That makes a central difference for every
//! parameter affordable. `naive_logits` is a plain loop-nest forward pass,
//! written without the library kernels, used to cross-check the sparse route.

#![allow(dead_code)]

use insomnia_eeg::model::{CnnModel, Trace};

pub const H: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
pub const FLOOR: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct Report {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: (String, usize),
    /// Parameters whose ±H nudge flips a ReLU or a pooling choice.
    pub kinks: usize,
    pub per_tensor: Vec<(String, usize, f64)>,
}

pub fn relative_error(g: f64, fd: f64) -> f64 {
    (g - fd).abs() / g.abs().max(fd.abs()).max(FLOOR)
}

fn cross_entropy(logits: &[f64], target: &[f64; 2]) -> f64 {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    -(target[0] * (logits[0] - lse) + target[1] * (logits[1] - lse))
}

struct Sparse {
    vals: Vec<f64>,
    mark: Vec<bool>,
    touched: Vec<usize>,
}

impl Sparse {
    fn new(n: usize) -> Self {
        Sparse {
            vals: vec![0.0; n],
            mark: vec![false; n],
            touched: Vec::new(),
        }
    }

    fn add(&mut self, i: usize, v: f64) {
        if !self.mark[i] {
            self.mark[i] = true;
            self.touched.push(i);
        }
        self.vals[i] += v;
    }
}

struct Net<'a> {
    model: &'a CnnModel,
    tr: &'a Trace,
    target: [f64; 2],
    lengths: [usize; 7],
    flatten: usize,
}

impl<'a> Net<'a> {
    fn w(&self, i: usize) -> &[f64] {
        &self.model.params[self.model.plan.tensors[i].range()]
    }

    fn shape(&self, i: usize) -> &[usize] {
        &self.model.plan.tensors[i].shape
    }

    fn conv(&self, d: &Sparse, l_in: usize, tensor: usize) -> Sparse {
        let (c_out, c_in, k) = (self.shape(tensor)[0], self.shape(tensor)[1], self.shape(tensor)[2]);
        let w = self.w(tensor);
        let l_out = l_in + 1 - k;
        let mut out = Sparse::new(c_out * l_out);
        for &idx in &d.touched {
            let (i, t) = (idx / l_in, idx % l_in);
            let dv = d.vals[idx];
            if dv == 0.0 {
                continue;
            }
            for o in 0..c_out {
                for j in 0..k {
                    if t >= j && t - j < l_out {
                        out.add(o * l_out + t - j, w[(o * c_in + i) * k + j] * dv);
                    }
                }
            }
        }
        out
    }

    fn relu(z: &[f64], dz: &Sparse, kink: &mut bool) -> Sparse {
        let mut out = Sparse::new(z.len());
        for &i in &dz.touched {
            let new = z[i] + dz.vals[i];
            if (z[i] > 0.0) != (new > 0.0) {
                *kink = true;
            }
            out.add(i, new.max(0.0) - z[i].max(0.0));
        }
        out
    }

    fn pool(a: &[f64], da: &Sparse, picks: &[usize], l_in: usize, kink: &mut bool) -> Sparse {
        let l_out = l_in / 2;
        let mut out = Sparse::new(picks.len());
        let mut seen = vec![false; picks.len()];
        for &idx in &da.touched {
            let (c, t) = (idx / l_in, idx % l_in);
            if t / 2 >= l_out {
                continue;
            }
            let win = c * l_out + t / 2;
            if std::mem::replace(&mut seen[win], true) {
                continue;
            }
            let base = c * l_in + 2 * (t / 2);
            let (v0, v1) = (a[base] + da.vals[base], a[base + 1] + da.vals[base + 1]);
            let pick = if v1 > v0 { base + 1 } else { base };
            if pick != picks[win] {
                *kink = true;
            }
            out.add(win, v0.max(v1) - a[picks[win]]);
        }
        out
    }

    fn dense(&self, d: &Sparse, tensor: usize) -> Sparse {
        let (n_out, n_in) = (self.shape(tensor)[0], self.shape(tensor)[1]);
        let w = self.w(tensor);
        let mut out = Sparse::new(n_out);
        for &i in &d.touched {
            let dv = d.vals[i];
            if dv == 0.0 {
                continue;
            }
            for o in 0..n_out {
                out.add(o, w[o * n_in + i] * dv);
            }
        }
        out
    }

    /// Loss after adding `d` to the pre-activation of stage `stage`
    /// (1..=6 for z1..z6, 7 for the logits).
    fn loss_from(&self, mut stage: usize, mut d: Sparse, kink: &mut bool) -> f64 {
        let l = self.lengths;
        let tr = self.tr;
        loop {
            d = match stage {
                1 => {
                    let a = Self::relu(&tr.z1, &d, kink);
                    self.conv(&a, l[0], 2)
                }
                2 => {
                    let a = Self::relu(&tr.z2, &d, kink);
                    let p = Self::pool(&tr.a2, &a, &tr.i2, l[1], kink);
                    self.conv(&p, l[2], 4)
                }
                3 => {
                    let a = Self::relu(&tr.z3, &d, kink);
                    let p = Self::pool(&tr.a3, &a, &tr.i3, l[3], kink);
                    self.conv(&p, l[4], 6)
                }
                4 => {
                    let a = Self::relu(&tr.z4, &d, kink);
                    let p = Self::pool(&tr.a4, &a, &tr.i4, l[5], kink);
                    self.dense(&p, 8)
                }
                5 => {
                    let a = Self::relu(&tr.z5, &d, kink);
                    self.dense(&a, 10)
                }
                6 => {
                    let a = Self::relu(&tr.z6, &d, kink);
                    self.dense(&a, 12)
                }
                _ => {
                    let logits = [tr.logits[0] + d.vals[0], tr.logits[1] + d.vals[1]];
                    return cross_entropy(&logits, &self.target);
                }
            };
            stage += 1;
        }
    }

    /// Loss with element `e` of tensor `t` shifted by `h`.
    fn nudged_loss(&self, t: usize, e: usize, h: f64, kink: &mut bool) -> f64 {
        let tr = self.tr;
        let l = self.lengths;
        // (stage fed, input of the layer, per-channel input length)
        let (stage, input, l_in): (usize, &[f64], usize) = match t / 2 {
            0 => (1, &tr.input, self.model.plan.input_width),
            1 => (2, &tr.a1, l[0]),
            2 => (3, &tr.p2, l[2]),
            3 => (4, &tr.p3, l[4]),
            4 => (5, &tr.p4, self.flatten),
            5 => (6, &tr.a5, self.shape(10)[1]),
            _ => (7, &tr.a6, self.shape(12)[1]),
        };
        let shape = self.shape(t - t % 2).to_vec();
        let is_bias = t % 2 == 1;
        let mut d;
        if shape.len() == 3 {
            let (c_out, c_in, k) = (shape[0], shape[1], shape[2]);
            let l_out = l_in + 1 - k;
            d = Sparse::new(c_out * l_out);
            if is_bias {
                for tt in 0..l_out {
                    d.add(e * l_out + tt, h);
                }
            } else {
                let (o, rest) = (e / (c_in * k), e % (c_in * k));
                let (i, j) = (rest / k, rest % k);
                for tt in 0..l_out {
                    d.add(o * l_out + tt, h * input[i * l_in + tt + j]);
                }
            }
        } else {
            let (n_out, n_in) = (shape[0], shape[1]);
            d = Sparse::new(n_out);
            if is_bias {
                d.add(e, h);
            } else {
                d.add(e / n_in, h * input[e % n_in]);
            }
        }
        self.loss_from(stage, d, kink)
    }
}

/// Central difference of the loss with respect to parameter `p`, computed
/// sparsely. Returns the estimate and whether a kink was crossed.
pub fn finite_difference(model: &CnnModel, trace: &Trace, target: [f64; 2], p: usize) -> (f64, bool) {
    let net = net(model, trace, target);
    let (t, e) = locate(model, p);
    let mut kink = false;
    let up = net.nudged_loss(t, e, H, &mut kink);
    let down = net.nudged_loss(t, e, -H, &mut kink);
    ((up - down) / (2.0 * H), kink)
}

fn net<'a>(model: &'a CnnModel, tr: &'a Trace, target: [f64; 2]) -> Net<'a> {
    Net {
        model,
        tr,
        target,
        lengths: model.plan.lengths,
        flatten: model.plan.flatten,
    }
}

fn locate(model: &CnnModel, p: usize) -> (usize, usize) {
    let t = model.plan.tensors.iter().position(|s| s.range().contains(&p)).expect("parameter index");
    (t, p - model.plan.tensors[t].offset)
}

/// Checks every parameter's backpropagated gradient against a central
/// difference.
pub fn check_all(model: &CnnModel, x: &[f64], target: [f64; 2]) -> Report {
    let trace = model.forward_trace(x).unwrap();
    let (grad, _) = model.backward(&trace, &target);
    let net = net(model, &trace, target);
    let mut report = Report {
        checked: 0,
        max_rel_err: 0.0,
        worst: (String::new(), 0),
        kinks: 0,
        per_tensor: Vec::new(),
    };
    for (t, spec) in model.plan.tensors.iter().enumerate() {
        let mut worst_here = 0.0f64;
        for e in 0..spec.len() {
            let mut kink = false;
            let up = net.nudged_loss(t, e, H, &mut kink);
            let down = net.nudged_loss(t, e, -H, &mut kink);
            if kink {
                report.kinks += 1;
                continue;
            }
            let fd = (up - down) / (2.0 * H);
            let err = relative_error(grad[spec.offset + e], fd);
            worst_here = worst_here.max(err);
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = (spec.name.to_string(), e);
            }
            report.checked += 1;
        }
        report.per_tensor.push((spec.name.to_string(), spec.len(), worst_here));
    }
    report
}

/// Straightforward forward pass over explicit loops, independent of the
/// library's kernels.
pub fn naive_logits(model: &CnnModel, params: &[f64], x: &[f64]) -> [f64; 2] {
    let t = |i: usize| &params[model.plan.tensors[i].range()];
    let shape = |i: usize| model.plan.tensors[i].shape.clone();
    let conv = |input: &Vec<Vec<f64>>, wi: usize| -> Vec<Vec<f64>> {
        let s = shape(wi);
        let (c_out, c_in, k) = (s[0], s[1], s[2]);
        let (w, b) = (t(wi), t(wi + 1));
        let l_out = input[0].len() + 1 - k;
        (0..c_out)
            .map(|o| {
                (0..l_out)
                    .map(|p| {
                        let mut acc = b[o];
                        for i in 0..c_in {
                            for j in 0..k {
                                acc += w[(o * c_in + i) * k + j] * input[i][p + j];
                            }
                        }
                        acc.max(0.0)
                    })
                    .collect()
            })
            .collect()
    };
    let pool = |input: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        input
            .into_iter()
            .map(|ch| (0..ch.len() / 2).map(|p| ch[2 * p].max(ch[2 * p + 1])).collect())
            .collect()
    };
    let dense = |input: &[f64], wi: usize, act: bool| -> Vec<f64> {
        let (w, b) = (t(wi), t(wi + 1));
        (0..b.len())
            .map(|o| {
                let z = b[o] + (0..input.len()).map(|i| w[o * input.len() + i] * input[i]).sum::<f64>();
                if act {
                    z.max(0.0)
                } else {
                    z
                }
            })
            .collect()
    };
    let a1 = conv(&vec![x.to_vec()], 0);
    let p2 = pool(conv(&a1, 2));
    let p3 = pool(conv(&p2, 4));
    let p4 = pool(conv(&p3, 6));
    let flat: Vec<f64> = p4.concat();
    let a5 = dense(&flat, 8, true);
    let a6 = dense(&a5, 10, true);
    let z = dense(&a6, 12, false);
    [z[0], z[1]]
}

pub fn naive_loss(model: &CnnModel, params: &[f64], x: &[f64], target: [f64; 2]) -> f64 {
    cross_entropy(&naive_logits(model, params, x), &target)
}
