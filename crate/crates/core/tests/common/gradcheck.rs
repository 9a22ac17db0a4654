//! Finite-difference gradient checks for tape graphs.

use gqnq::ad::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Central finite-difference gradient of `f` with respect to input `which`.
pub fn fd_grad(f: &dyn Fn(&[Tensor]) -> f64, inputs: &[Tensor], which: usize, h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for j in 0..inputs[which].numel() {
        let mut plus = inputs.to_vec();
        plus[which].data_mut()[j] += h;
        let mut minus = inputs.to_vec();
        minus[which].data_mut()[j] -= h;
        out.push((f(&plus) - f(&minus)) / (2.0 * h));
    }
    out
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if den < 1e-12 {
        num
    } else {
        num / den
    }
}

/// Builds `graph` on a fresh tape, checks analytic against numeric gradients.
pub fn check_gradients(
    inputs: &[Tensor],
    graph: &dyn Fn(&mut Tape, &[Var]) -> Var,
) -> f64 {
    let eval = |ins: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = graph(&mut tape, &vars);
        tape.value(out).item()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = graph(&mut tape, &vars);
    let grads = tape.backward(out).unwrap();
    let mut worst: f64 = 0.0;
    for (i, &v) in vars.iter().enumerate() {
        let analytic = grads.wrt(v);
        let numeric = fd_grad(&eval, inputs, i, 1e-5);
        worst = worst.max(rel_err(analytic.data(), &numeric));
    }
    worst
}

pub type Graph = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;

pub fn primitive_cases() -> Vec<(&'static str, Vec<Vec<usize>>, Graph)> {
    vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], Box::new(|t: &mut Tape, v: &[Var]| {
            let y = t.matmul(v[0], v[1]).unwrap();
            let y = t.tanh(y);
            t.sum(y)
        })),
        ("linear", vec![vec![5, 3], vec![4, 3], vec![4]], Box::new(|t: &mut Tape, v: &[Var]| {
            let y = t.linear(v[0], v[1], Some(v[2])).unwrap();
            let y = t.square(y);
            t.mean(y)
        })),
        ("add_bcast", vec![vec![3, 4], vec![1, 4]], Box::new(|t: &mut Tape, v: &[Var]| {
            let y = t.add(v[0], v[1]).unwrap();
            let y = t.sigmoid(y);
            t.sum(y)
        })),
        ("sub_lhs_bcast", vec![vec![1, 4], vec![3, 4]], Box::new(|t: &mut Tape, v: &[Var]| {
            let y = t.sub(v[0], v[1]).unwrap();
            let y = t.square(y);
            t.sum(y)
        })),
        ("mul", vec![vec![2, 5], vec![2, 5]], Box::new(|t: &mut Tape, v: &[Var]| {
            let y = t.mul(v[0], v[1]).unwrap();
            let y = t.tanh(y);
            t.sum(y)
        })),
        ("exp_log", vec![vec![6]], Box::new(|t: &mut Tape, v: &[Var]| {
            let y = t.square(v[0]);
            let y = t.add_scalar(y, 0.5);
            let y = t.log(y).unwrap();
            let y = t.exp(y);
            let y = t.scale(y, 0.3);
            t.sum(y)
        })),
        ("softplus", vec![vec![3, 3]], Box::new(|t: &mut Tape, v: &[Var]| {
            let y = t.softplus(v[0]);
            let y = t.mul(y, v[0]).unwrap();
            t.sum(y)
        })),
        ("concat_slice", vec![vec![2, 3], vec![1, 2], vec![2, 1]], Box::new(|t: &mut Tape, v: &[Var]| {
            let c = t.concat(&[v[0], v[1], v[2]]).unwrap();
            let s = t.slice(c, 2, 3).unwrap();
            let s = t.tanh(s);
            let q = t.square(c);
            let a = t.sum(s);
            let b = t.mean(q);
            t.add(a, b).unwrap()
        })),
        ("mean_rows_broadcast", vec![vec![4, 3]], Box::new(|t: &mut Tape, v: &[Var]| {
            let m = t.mean_rows(v[0]).unwrap();
            let b = t.broadcast_rows(m, 2).unwrap();
            let y = t.tanh(b);
            let y = t.mul(y, y).unwrap();
            t.sum(y)
        })),
        ("dense", vec![vec![3, 4], vec![3], vec![2, 4]], Box::new(|t: &mut Tape, v: &[Var]| {
            let y = dense(t, v[0], v[1], v[2], Activation::Tanh).unwrap();
            t.sum(y)
        })),
        ("lstm", vec![vec![12, 5], vec![12], vec![2, 2], vec![2, 3], vec![2, 3]], Box::new(|t: &mut Tape, v: &[Var]| {
            let (h, c) = lstm_cell(t, LstmVars { w: v[0], b: v[1] }, v[2], v[3], v[4]).unwrap();
            let hc = t.mul(h, c).unwrap();
            let s1 = t.sum(hc);
            let s2 = t.sum(c);
            t.add(s1, s2).unwrap()
        })),
        ("gaussian_sample", vec![vec![2, 3], vec![2, 3], vec![2, 3]], Box::new(|t: &mut Tape, v: &[Var]| {
            let g = GaussianVar { mean: v[0], log_std: v[1] };
            let z = gaussian_sample(t, g, v[2]).unwrap();
            let z = t.tanh(z);
            t.sum(z)
        })),
        ("gaussian_log_density", vec![vec![2, 3], vec![2, 3], vec![2, 3]], Box::new(|t: &mut Tape, v: &[Var]| {
            let ls = t.scale(v[1], 0.3);
            let g = GaussianVar { mean: v[0], log_std: ls };
            gaussian_log_density(t, g, v[2]).unwrap()
        })),
        ("gaussian_kl", vec![vec![3], vec![3], vec![3], vec![3]], Box::new(|t: &mut Tape, v: &[Var]| {
            let la = t.scale(v[1], 0.3);
            let lb = t.scale(v[3], 0.3);
            let a = GaussianVar { mean: v[0], log_std: la };
            let b = GaussianVar { mean: v[2], log_std: lb };
            gaussian_kl(t, a, b).unwrap()
        })),
    ]
}

/// Worst relative gradient error over 100 random inputs of every primitive case.
pub fn worst_primitive_error(seed: u64) -> (String, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (String::new(), 0.0);
    for (name, shapes, graph) in primitive_cases() {
        for _ in 0..100 {
            let inputs: Vec<Tensor> = shapes.iter().map(|s| randn(&mut rng, s)).collect();
            let err = check_gradients(&inputs, graph.as_ref());
            if err > worst.1 {
                worst = (name.to_string(), err);
            }
        }
    }
    worst
}
