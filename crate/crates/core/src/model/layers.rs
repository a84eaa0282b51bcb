//! Layer kernels on channel-major buffers: a tensor of `c` channels of length
//! `l` is stored as `x[ch * l + t]`.

/// Valid (unpadded) stride-1 1D convolution.
/// `w` is `[c_out][c_in][k]`, output is `[c_out][l_in - k + 1]`.
pub fn conv1d_forward(x: &[f64], c_in: usize, w: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let l_in = x.len() / c_in;
    let c_out = b.len();
    let l_out = l_in + 1 - k;
    let mut z = vec![0.0; c_out * l_out];
    for o in 0..c_out {
        let out = &mut z[o * l_out..(o + 1) * l_out];
        out.fill(b[o]);
        for i in 0..c_in {
            let xi = &x[i * l_in..(i + 1) * l_in];
            let wk = &w[(o * c_in + i) * k..(o * c_in + i + 1) * k];
            for (j, &wj) in wk.iter().enumerate() {
                for (zt, &xv) in out.iter_mut().zip(&xi[j..j + l_out]) {
                    *zt += wj * xv;
                }
            }
        }
    }
    z
}

/// Accumulates weight and bias gradients into `dw`, `db` and returns the
/// gradient with respect to `x`.
pub fn conv1d_backward(
    x: &[f64],
    c_in: usize,
    w: &[f64],
    k: usize,
    dz: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let l_in = x.len() / c_in;
    let c_out = db.len();
    let l_out = l_in + 1 - k;
    let mut dx = vec![0.0; x.len()];
    for o in 0..c_out {
        let g = &dz[o * l_out..(o + 1) * l_out];
        db[o] += g.iter().sum::<f64>();
        for i in 0..c_in {
            let xi = &x[i * l_in..(i + 1) * l_in];
            let base = (o * c_in + i) * k;
            for j in 0..k {
                let mut acc = 0.0;
                for (gt, &xv) in g.iter().zip(&xi[j..j + l_out]) {
                    acc += gt * xv;
                }
                dw[base + j] += acc;
                let wj = w[base + j];
                for (d, gt) in dx[i * l_in + j..i * l_in + j + l_out].iter_mut().zip(g) {
                    *d += wj * gt;
                }
            }
        }
    }
    dx
}

/// Max over windows of 2 with stride 2; a trailing odd sample is dropped.
/// Returns the pooled values and the source index of each maximum (the
/// earlier sample wins ties).
pub fn maxpool2_forward(x: &[f64], channels: usize) -> (Vec<f64>, Vec<usize>) {
    let l_in = x.len() / channels;
    let l_out = l_in / 2;
    let mut y = Vec::with_capacity(channels * l_out);
    let mut idx = Vec::with_capacity(channels * l_out);
    for c in 0..channels {
        for t in 0..l_out {
            let a = c * l_in + 2 * t;
            let pick = if x[a + 1] > x[a] { a + 1 } else { a };
            y.push(x[pick]);
            idx.push(pick);
        }
    }
    (y, idx)
}

pub fn maxpool2_backward(dy: &[f64], idx: &[usize], input_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (&g, &i) in dy.iter().zip(idx) {
        dx[i] += g;
    }
    dx
}

/// `z = W x + b` with `W` stored `[out][in]`.
pub fn dense_forward(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    b.iter()
        .enumerate()
        .map(|(o, &bo)| bo + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

pub fn dense_backward(x: &[f64], w: &[f64], dz: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let n_in = x.len();
    let mut dx = vec![0.0; n_in];
    for (o, &g) in dz.iter().enumerate() {
        db[o] += g;
        if g == 0.0 {
            continue;
        }
        let row = o * n_in..(o + 1) * n_in;
        for ((d, &wv), (dwv, &xv)) in dx.iter_mut().zip(&w[row.clone()]).zip(dw[row].iter_mut().zip(x)) {
            *d += wv * g;
            *dwv += g * xv;
        }
    }
    dx
}

pub fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| v.max(0.0)).collect()
}

/// Gradient through ReLU; the derivative at exactly 0 is taken as 0.
pub fn relu_backward(z: &[f64], da: &[f64]) -> Vec<f64> {
    z.iter().zip(da).map(|(&zv, &g)| if zv > 0.0 { g } else { 0.0 }).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Cross-entropy `-sum y log p` computed from logits for stability.
pub fn cross_entropy(logits: &[f64], target: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
    logits.iter().zip(target).map(|(&z, &y)| if y == 0.0 { 0.0 } else { -y * (z - lse) }).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rand_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Central difference of `f` at `x` along coordinate `i`.
    fn fd(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
        let mut p = x.to_vec();
        p[i] += h;
        let up = f(&p);
        p[i] -= 2.0 * h;
        (up - f(&p)) / (2.0 * h)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn conv_forward_by_definition() {
        // 1 input channel [1,2,3,4], kernel [1,0,-1], bias 0.5
        let z = conv1d_forward(&[1.0, 2.0, 3.0, 4.0], 1, &[1.0, 0.0, -1.0], &[0.5], 3);
        assert_eq!(z, vec![-1.5, -1.5]);
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for &(c_in, c_out, l, k) in &[(1, 3, 7, 3), (3, 2, 6, 2), (4, 5, 3, 1)] {
            let x = rand_vec(&mut rng, c_in * l);
            let w = rand_vec(&mut rng, c_out * c_in * k);
            let b = rand_vec(&mut rng, c_out);
            let l_out = l + 1 - k;
            let coef = rand_vec(&mut rng, c_out * l_out);
            // scalar objective: <coef, conv(x)>
            let obj = |x: &[f64], w: &[f64], b: &[f64]| -> f64 {
                conv1d_forward(x, c_in, w, b, k).iter().zip(&coef).map(|(a, c)| a * c).sum()
            };
            let mut dw = vec![0.0; w.len()];
            let mut db = vec![0.0; b.len()];
            let dx = conv1d_backward(&x, c_in, &w, k, &coef, &mut dw, &mut db);
            for i in 0..x.len() {
                assert!(close(dx[i], fd(&|p| obj(p, &w, &b), &x, i, 1e-5)));
            }
            for i in 0..w.len() {
                assert!(close(dw[i], fd(&|p| obj(&x, p, &b), &w, i, 1e-5)));
            }
            for i in 0..b.len() {
                assert!(close(db[i], fd(&|p| obj(&x, &w, p), &b, i, 1e-5)));
            }
        }
    }

    #[test]
    fn pool_routing() {
        let x = [1.0, 3.0, 2.0, 2.0, 5.0, /* second channel */ 0.0, -1.0, 4.0, 7.0, 9.0];
        let (y, idx) = maxpool2_forward(&x, 2);
        assert_eq!(y, vec![3.0, 2.0, 0.0, 7.0]);
        assert_eq!(idx, vec![1, 2, 5, 8]);
        let dx = maxpool2_backward(&[1.0, 2.0, 3.0, 4.0], &idx, x.len());
        assert_eq!(dx, vec![0.0, 1.0, 2.0, 0.0, 0.0, 3.0, 0.0, 0.0, 4.0, 0.0]);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x = rand_vec(&mut rng, 3 * 9);
        let coef = rand_vec(&mut rng, 3 * 4);
        let obj = |p: &[f64]| -> f64 { maxpool2_forward(p, 3).0.iter().zip(&coef).map(|(a, c)| a * c).sum() };
        let (_, idx) = maxpool2_forward(&x, 3);
        let dx = maxpool2_backward(&coef, &idx, x.len());
        for i in 0..x.len() {
            assert!(close(dx[i], fd(&obj, &x, i, 1e-6)));
        }
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (n_in, n_out) = (6, 4);
        let x = rand_vec(&mut rng, n_in);
        let w = rand_vec(&mut rng, n_in * n_out);
        let b = rand_vec(&mut rng, n_out);
        let coef = rand_vec(&mut rng, n_out);
        let obj = |x: &[f64], w: &[f64]| -> f64 { dense_forward(x, w, &b).iter().zip(&coef).map(|(a, c)| a * c).sum() };
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; n_out];
        let dx = dense_backward(&x, &w, &coef, &mut dw, &mut db);
        assert_eq!(db, coef);
        for i in 0..n_in {
            assert!(close(dx[i], fd(&|p| obj(p, &w), &x, i, 1e-5)));
        }
        for i in 0..w.len() {
            assert!(close(dw[i], fd(&|p| obj(&x, p), &w, i, 1e-5)));
        }
    }

    #[test]
    fn softmax_cross_entropy_gradient_is_p_minus_y() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let z = rand_vec(&mut rng, 2).iter().map(|v| v * 5.0).collect::<Vec<_>>();
            let q: f64 = rng.gen();
            let y = [q, 1.0 - q];
            let p = softmax(&z);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..2 {
                let g = fd(&|l| cross_entropy(l, &y), &z, i, 1e-5);
                assert!(close(p[i] - y[i], g), "{} vs {g}", p[i] - y[i]);
            }
        }
    }

    #[test]
    fn relu_mask() {
        assert_eq!(relu(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        assert_eq!(relu_backward(&[-1.0, 0.0, 2.0], &[5.0, 5.0, 5.0]), vec![0.0, 0.0, 5.0]);
    }
}
