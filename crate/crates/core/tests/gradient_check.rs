mod support;

use insomnia_eeg::model::CnnModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::gradcheck;

/// A seeded model with nonzero biases and a random input.
fn instance(seed: u64) -> (CnnModel, Vec<f64>) {
    let mut model = CnnModel::new(20, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    for t in model.plan.tensors.clone() {
        if t.shape.len() == 1 {
            for p in &mut model.params[t.range()] {
                *p = rng.gen_range(-0.1..0.1);
            }
        }
    }
    let x = (0..20).map(|_| rng.gen_range(-2.0..2.0)).collect();
    (model, x)
}

#[test]
fn every_parameter_matches_central_differences() {
    let (model, x) = instance(3);
    let report = gradcheck::check_all(&model, &x, [0.0, 1.0]);
    for (name, n, err) in &report.per_tensor {
        println!("{name:>14} {n:>7} params  max rel err {err:.2e}");
    }
    assert_eq!(report.kinks, 0, "instance crosses a ReLU/pool kink; pick another seed");
    assert_eq!(report.checked, model.params.len());
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}

#[test]
fn sparse_oracle_agrees_with_naive_forward() {
    let (model, x) = instance(3);
    let target = [1.0, 0.0];
    let trace = model.forward_trace(&x).unwrap();
    let logits = gradcheck::naive_logits(&model, &model.params, &x);
    assert!((logits[0] - trace.logits[0]).abs() < 1e-10);
    assert!((logits[1] - trace.logits[1]).abs() < 1e-10);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // a few parameters from every tensor
    let picks: Vec<usize> = model
        .plan
        .tensors
        .iter()
        .flat_map(|t| (0..4).map(|_| t.offset + rng.gen_range(0..t.len())).collect::<Vec<_>>())
        .collect();
    for p in picks {
        let (sparse, kink) = gradcheck::finite_difference(&model, &trace, target, p);
        assert!(!kink);
        let mut params = model.params.clone();
        params[p] += gradcheck::H;
        let up = gradcheck::naive_loss(&model, &params, &x, target);
        params[p] -= 2.0 * gradcheck::H;
        let down = gradcheck::naive_loss(&model, &params, &x, target);
        let naive = (up - down) / (2.0 * gradcheck::H);
        assert!(gradcheck::relative_error(sparse, naive) < 1e-6, "param {p}: {sparse} vs {naive}");
    }
}

#[test]
fn masked_input_has_zero_gradient() {
    let (mut model, mut x) = instance(5);
    // every first-layer kernel positive and a huge negative first sample:
    // the only windows that see x[0] are switched off for all kernels
    let w = model.plan.tensors[0].range();
    for p in &mut model.params[w] {
        *p = p.abs().max(0.1);
    }
    x[0] = -1e3;
    let trace = model.forward_trace(&x).unwrap();
    let (_, dx) = model.backward(&trace, &[0.0, 1.0]);
    assert_eq!(dx[0], 0.0);
    assert!(dx[1..].iter().any(|v| *v != 0.0));
}

#[test]
fn input_gradient_matches_naive_differences() {
    let (model, x) = instance(6);
    let target = [0.3, 0.7];
    let trace = model.forward_trace(&x).unwrap();
    let (_, dx) = model.backward(&trace, &target);
    for i in 0..20 {
        let mut p = x.clone();
        p[i] += 1e-5;
        let up = gradcheck::naive_loss(&model, &model.params, &p, target);
        p[i] -= 2e-5;
        let down = gradcheck::naive_loss(&model, &model.params, &p, target);
        let fd = (up - down) / 2e-5;
        assert!(gradcheck::relative_error(dx[i], fd) < 1e-4, "x[{i}]: {} vs {fd}", dx[i]);
    }
}
