//! Gradient and numerics checks for the tape engine against independent oracles.

use gqnq::ad::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

mod common;
use common::gradcheck::*;

#[test]
fn every_primitive_matches_finite_differences_on_100_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (name, shapes, graph) in primitive_cases() {
        for _ in 0..100 {
            let inputs: Vec<Tensor> = shapes.iter().map(|s| randn(&mut rng, s)).collect();
            let err = check_gradients(&inputs, graph.as_ref());
            assert!(err < 1e-4, "{name}: relative error {err}");
        }
    }
}

#[test]
fn three_layer_mlp_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shapes = [vec![6, 4], vec![6], vec![5, 6], vec![5], vec![2, 5], vec![2], vec![3, 4]];
    let graph = |t: &mut Tape, v: &[Var]| {
        let h1 = dense(t, v[0], v[1], v[6], Activation::Tanh).unwrap();
        let h2 = dense(t, v[2], v[3], h1, Activation::Sigmoid).unwrap();
        let out = dense(t, v[4], v[5], h2, Activation::Identity).unwrap();
        let sq = t.square(out);
        t.sum(sq)
    };
    for _ in 0..20 {
        let inputs: Vec<Tensor> = shapes.iter().map(|s| randn(&mut rng, s)).collect();
        let err = check_gradients(&inputs, &graph);
        assert!(err < 1e-4, "relative error {err}");
    }
}

#[test]
fn sum_of_wx_gradient_is_x_per_row() {
    let mut tape = Tape::new();
    let w = tape.leaf(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let x = tape.leaf(Tensor::vector(vec![0.5, -1.0, 2.0]));
    let unused = tape.leaf(Tensor::vector(vec![1.0, 1.0]));
    let y = tape.matmul(w, x).unwrap();
    let loss = tape.sum(y);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.wrt(w).data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    assert!(g.get(unused).is_none());
    assert_eq!(g.wrt(unused).data(), &[0.0, 0.0]);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
    let y = tape.tanh(x);
    assert!(tape.backward(y).is_err());
}

#[test]
fn shape_errors_report_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::zeros(&[2, 3]));
    let b = tape.leaf(Tensor::zeros(&[2, 3]));
    match tape.matmul(a, b) {
        Err(gqnq::Error::ShapeMismatch { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("expected shape mismatch, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn primitive_values() {
    let mut tape = Tape::new();
    let i2 = tape.leaf(Tensor::identity(2));
    let v = tape.leaf(Tensor::vector(vec![0.7, -3.0]));
    let y = tape.matmul(i2, v).unwrap();
    assert_eq!(tape.value(y).data(), &[0.7, -3.0]);
    let z = tape.leaf(Tensor::scalar(0.0));
    let t = tape.tanh(z);
    let s = tape.sigmoid(z);
    assert_eq!(tape.value(t).item(), 0.0);
    assert_eq!(tape.value(s).item(), 0.5);
    let a = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
    let b = tape.leaf(Tensor::vector(vec![3.0]));
    let c = tape.concat(&[a, b]).unwrap();
    assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0]);
    assert_eq!(tape.shape(c), &[3]);
}

/// Naive triple loop reference for `act(W·x + b)`.
fn dense_reference(w: &Tensor, b: &Tensor, x: &Tensor) -> Vec<f64> {
    let (out, inp) = (w.shape()[0], w.shape()[1]);
    let mut y = Vec::new();
    for r in 0..x.rows() {
        for o in 0..out {
            let mut acc = b.data()[o];
            for i in 0..inp {
                acc += w.data()[o * inp + i] * x.data()[r * inp + i];
            }
            y.push(acc.tanh());
        }
    }
    y
}

#[test]
fn dense_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = randn(&mut rng, &[7, 9]);
    let b = randn(&mut rng, &[7]);
    let x = randn(&mut rng, &[4, 9]);
    let mut tape = Tape::new();
    let (wv, bv, xv) = (tape.leaf(w.clone()), tape.leaf(b.clone()), tape.leaf(x.clone()));
    let y = dense(&mut tape, wv, bv, xv, Activation::Tanh).unwrap();
    for (a, e) in tape.value(y).data().iter().zip(dense_reference(&w, &b, &x)) {
        assert!((a - e).abs() < 1e-12);
    }
    // Degenerate weights.
    let zw = tape.leaf(Tensor::zeros(&[3, 3]));
    let zb = tape.leaf(Tensor::zeros(&[3]));
    let xin = tape.leaf(Tensor::vector(vec![1.0, -2.0, 0.5]));
    let y0 = dense(&mut tape, zw, zb, xin, Activation::Identity).unwrap();
    assert_eq!(tape.value(y0).data(), &[0.0; 3]);
    let iw = tape.leaf(Tensor::identity(3));
    let y1 = dense(&mut tape, iw, zb, xin, Activation::Identity).unwrap();
    assert_eq!(tape.value(y1).data(), &[1.0, -2.0, 0.5]);
}

/// Step-by-step LSTM reference with separate gate loops.
fn lstm_reference(w: &Tensor, b: &Tensor, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hd = h.len();
    let cols = x.len() + hd;
    let input: Vec<f64> = x.iter().chain(h).copied().collect();
    let gate = |block: usize, j: usize| {
        let row = block * hd + j;
        let mut acc = b.data()[row];
        for k in 0..cols {
            acc += w.data()[row * cols + k] * input[k];
        }
        acc
    };
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut h_new = Vec::new();
    let mut c_new = Vec::new();
    for j in 0..hd {
        let i = sig(gate(0, j));
        let f = sig(gate(1, j));
        let g = gate(2, j).tanh();
        let o = sig(gate(3, j));
        let cj = f * c[j] + i * g;
        c_new.push(cj);
        h_new.push(o * cj.tanh());
    }
    (h_new, c_new)
}

#[test]
fn lstm_matches_reference_and_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (xd, hd) = (5, 4);
    let w = randn(&mut rng, &[4 * hd, xd + hd]);
    let b = randn(&mut rng, &[4 * hd]);
    let x = randn(&mut rng, &[1, xd]);
    let h = randn(&mut rng, &[1, hd]);
    let c = randn(&mut rng, &[1, hd]);
    let mut tape = Tape::new();
    let vars: Vec<Var> = [&w, &b, &x, &h, &c].iter().map(|t| tape.leaf((*t).clone())).collect();
    let (hn, cn) = lstm_cell(&mut tape, LstmVars { w: vars[0], b: vars[1] }, vars[2], vars[3], vars[4]).unwrap();
    let (he, ce) = lstm_reference(&w, &b, x.data(), h.data(), c.data());
    for (a, e) in tape.value(hn).data().iter().zip(&he) {
        assert!((a - e).abs() < 1e-12);
    }
    for (a, e) in tape.value(cn).data().iter().zip(&ce) {
        assert!((a - e).abs() < 1e-12);
    }

    // All-zero parameters and state.
    let mut tape = Tape::new();
    let zw = tape.leaf(Tensor::zeros(&[4 * hd, xd + hd]));
    let zb = tape.leaf(Tensor::zeros(&[4 * hd]));
    let xz = tape.leaf(x.clone());
    let hz = tape.leaf(Tensor::zeros(&[1, hd]));
    let cz = tape.leaf(Tensor::zeros(&[1, hd]));
    let (h0, c0) = lstm_cell(&mut tape, LstmVars { w: zw, b: zb }, xz, hz, cz).unwrap();
    assert!(tape.value(h0).data().iter().all(|&v| v == 0.0));
    assert!(tape.value(c0).data().iter().all(|&v| v == 0.0));

    // Forget gate saturated open, input gate shut: the cell state is carried over.
    let mut bias = vec![0.0; 4 * hd];
    bias[..hd].iter_mut().for_each(|v| *v = -800.0);
    bias[hd..2 * hd].iter_mut().for_each(|v| *v = 800.0);
    let sb = tape.leaf(Tensor::vector(bias));
    let cp = tape.leaf(c.clone());
    let (_, c1) = lstm_cell(&mut tape, LstmVars { w: zw, b: sb }, xz, hz, cp).unwrap();
    assert_eq!(tape.value(c1).data(), c.data());
}

#[test]
fn log_density_normalizes_by_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let mean: f64 = rng.random_range(-2.0..2.0);
        let log_std: f64 = rng.random_range(-1.0..0.7);
        let g = DiagonalGaussian::new(vec![mean], vec![log_std]).unwrap();
        let std = log_std.exp();
        // Composite Simpson over ±12 std.
        let (a, b, n) = (mean - 12.0 * std, mean + 12.0 * std, 20_000);
        let h = (b - a) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let x = a + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * log_density(&g, &[x]).exp();
        }
        let integral = acc * h / 3.0;
        assert!((integral - 1.0).abs() < 1e-10, "integral {integral}");
        assert!(log_density(&g, &[mean]) > log_density(&g, &[mean + 0.01]));
    }
}

#[test]
fn kl_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let a = DiagonalGaussian::new(vec![0.2, -0.4], vec![-0.3, 0.1]).unwrap();
    let b = DiagonalGaussian::new(vec![-0.5, 0.3], vec![0.2, -0.2]).unwrap();
    let exact = kl_divergence(&a, &b);
    let n = 1_000_000;
    let sa = a.std();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let x: Vec<f64> = (0..2)
            .map(|j| a.mean[j] + sa[j] * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let d = log_density(&a, &x) - log_density(&b, &x);
        sum += d;
        sum_sq += d * d;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - exact).abs() < 3.0 * se, "MC {mean} vs exact {exact} (se {se})");
}

#[test]
fn kl_nonnegative_zero_iff_equal() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let a = DiagonalGaussian::new(
            (0..3).map(|_| rng.random_range(-3.0..3.0)).collect(),
            (0..3).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let b = DiagonalGaussian::new(
            (0..3).map(|_| rng.random_range(-3.0..3.0)).collect(),
            (0..3).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        assert!(kl_divergence(&a, &b) > 0.0);
        assert_eq!(kl_divergence(&a, &a), 0.0);
    }
}

/// Reference Adam recurrence written out independently.
fn adam_reference(p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], t: i32, lr: f64) {
    for j in 0..p.len() {
        m[j] = 0.9 * m[j] + 0.1 * g[j];
        v[j] = 0.999 * v[j] + 0.001 * g[j] * g[j];
        let mh = m[j] / (1.0 - 0.9f64.powi(t));
        let vh = v[j] / (1.0 - 0.999f64.powi(t));
        p[j] -= lr * mh / (vh.sqrt() + 1e-8);
    }
}

#[test]
fn adam_steps() {
    let p0 = Tensor::vector(vec![0.5, -1.0, 2.0]);
    let mut params = vec![p0.clone()];
    let mut adam = AdamState::new(&params);

    adam.step(&mut params, &[Tensor::zeros(&[3])], 0.01).unwrap();
    assert_eq!(params[0], p0);
    assert_eq!(adam.t, 1);

    // First real step: update is -lr * g / (|g| + eps).
    let mut params = vec![p0.clone()];
    let mut adam = AdamState::new(&params);
    let g = Tensor::vector(vec![0.3, -2.0, 1e-3]);
    adam.step(&mut params, std::slice::from_ref(&g), 0.01).unwrap();
    for j in 0..3 {
        let gj = g.data()[j];
        let expected = p0.data()[j] - 0.01 * gj / (gj.abs() + 1e-8);
        assert!((params[0].data()[j] - expected).abs() < 1e-12);
    }

    adam.step(&mut params, std::slice::from_ref(&g), 0.01).unwrap();
    let (mut p, mut m, mut v) = (p0.data().to_vec(), vec![0.0; 3], vec![0.0; 3]);
    adam_reference(&mut p, &mut m, &mut v, g.data(), 1, 0.01);
    adam_reference(&mut p, &mut m, &mut v, g.data(), 2, 0.01);
    for j in 0..3 {
        assert!((params[0].data()[j] - p[j]).abs() < 1e-12);
    }
}

#[test]
fn two_op_chain_matches_analytic_jacobian() {
    // y = sum(tanh(A x)); dy/dx = Aᵀ (1 - tanh²(A x)).
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let a = randn(&mut rng, &[3, 4]);
        let x = randn(&mut rng, &[4]);
        let mut tape = Tape::new();
        let (av, xv) = (tape.leaf(a.clone()), tape.leaf(x.clone()));
        let ax = tape.matmul(av, xv).unwrap();
        let th = tape.tanh(ax);
        let y = tape.sum(th);
        let g = tape.backward(y).unwrap().wrt(xv);
        for k in 0..4 {
            let mut expect = 0.0;
            for i in 0..3 {
                let z: f64 = (0..4).map(|j| a.data()[i * 4 + j] * x.data()[j]).sum();
                expect += a.data()[i * 4 + k] * (1.0 - z.tanh().powi(2));
            }
            assert!((g.data()[k] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn replay_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = randn(&mut rng, &[16, 9]);
        let b = randn(&mut rng, &[16]);
        let x = randn(&mut rng, &[3, 5]);
        let mut tape = Tape::new();
        let (wv, bv, xv) = (tape.leaf(w), tape.leaf(b), tape.leaf(x));
        let h = tape.leaf(Tensor::zeros(&[3, 4]));
        let c = tape.leaf(Tensor::zeros(&[3, 4]));
        let (h1, c1) = lstm_cell(&mut tape, LstmVars { w: wv, b: bv }, xv, h, c).unwrap();
        let (h2, _) = lstm_cell(&mut tape, LstmVars { w: wv, b: bv }, xv, h1, c1).unwrap();
        let y = tape.sum(h2);
        let g = tape.backward(y).unwrap();
        g.wrt(wv).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
