//! Neural building blocks expressed as tape primitives.

use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

/// `activation(W·x + b)` for every row of `x`; `w` has shape `[out, in]`.
pub fn dense(tape: &mut Tape, w: Var, b: Var, x: Var, activation: Activation) -> Result<Var> {
    let pre = tape.linear(x, w, Some(b))?;
    Ok(match activation {
        Activation::Identity => pre,
        Activation::Tanh => tape.tanh(pre),
        Activation::Sigmoid => tape.sigmoid(pre),
    })
}

/// Fused gate weights of an LSTM cell.
///
/// `w` has shape `[4H, in + H]` acting on `concat(input, h_prev)`; the four
/// row blocks are the input, forget, candidate and output gates in that order.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w: Var,
    pub b: Var,
}

/// One LSTM step, returning `(h, c)`.
pub fn lstm_cell(
    tape: &mut Tape,
    params: LstmVars,
    input: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    let hidden = tape.value(h_prev).cols();
    let w_shape = tape.shape(params.w).to_vec();
    let in_dim = tape.value(input).cols();
    if w_shape.len() != 2 || w_shape[0] != 4 * hidden || w_shape[1] != in_dim + hidden {
        return Err(Error::shape("lstm_cell", &w_shape, &[4 * hidden, in_dim + hidden]));
    }
    if tape.value(c_prev).cols() != hidden {
        return Err(Error::shape("lstm_cell(state)", tape.shape(h_prev), tape.shape(c_prev)));
    }
    let xh = tape.concat(&[input, h_prev])?;
    let gates = tape.linear(xh, params.w, Some(params.b))?;
    let i_pre = tape.slice(gates, 0, hidden)?;
    let f_pre = tape.slice(gates, hidden, hidden)?;
    let g_pre = tape.slice(gates, 2 * hidden, hidden)?;
    let o_pre = tape.slice(gates, 3 * hidden, hidden)?;
    let i = tape.sigmoid(i_pre);
    let f = tape.sigmoid(f_pre);
    let g = tape.tanh(g_pre);
    let o = tape.sigmoid(o_pre);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Diagonal Gaussian as concrete values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalGaussian {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(Error::shape("DiagonalGaussian", &[mean.len()], &[log_std.len()]));
        }
        Ok(Self { mean, log_std })
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }
}

/// Diagonal Gaussian whose parameters live on a tape. Both fields share a shape;
/// rows index independent distributions.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVar {
    pub mean: Var,
    pub log_std: Var,
}

impl GaussianVar {
    pub fn leaf(tape: &mut Tape, g: &DiagonalGaussian) -> Self {
        Self {
            mean: tape.leaf(Tensor::vector(g.mean.clone())),
            log_std: tape.leaf(Tensor::vector(g.log_std.clone())),
        }
    }

    /// Reads row `row` back as concrete values.
    pub fn row_value(&self, tape: &Tape, row: usize) -> DiagonalGaussian {
        DiagonalGaussian {
            mean: tape.value(self.mean).row(row).to_vec(),
            log_std: tape.value(self.log_std).row(row).to_vec(),
        }
    }

    fn check(&self, tape: &Tape, op: &'static str) -> Result<()> {
        if tape.shape(self.mean) != tape.shape(self.log_std) {
            return Err(Error::shape(op, tape.shape(self.mean), tape.shape(self.log_std)));
        }
        Ok(())
    }
}

/// Reparameterized draw `mean + exp(log_std) ⊙ noise`.
pub fn gaussian_sample(tape: &mut Tape, g: GaussianVar, noise: Var) -> Result<Var> {
    g.check(tape, "gaussian_sample")?;
    if tape.value(noise).numel() != tape.value(g.mean).numel() {
        return Err(Error::shape("gaussian_sample", tape.shape(g.mean), tape.shape(noise)));
    }
    let std = tape.exp(g.log_std);
    let scaled = tape.mul(std, noise)?;
    tape.add(g.mean, scaled)
}

/// Log-density of `x` summed over every component (and every row).
pub fn gaussian_log_density(tape: &mut Tape, g: GaussianVar, x: Var) -> Result<Var> {
    g.check(tape, "gaussian_log_density")?;
    if tape.shape(x) != tape.shape(g.mean) {
        return Err(Error::shape("gaussian_log_density", tape.shape(g.mean), tape.shape(x)));
    }
    let n = tape.value(x).numel() as f64;
    let diff = tape.sub(x, g.mean)?;
    let sq = tape.square(diff);
    let neg2 = tape.scale(g.log_std, -2.0);
    let inv_var = tape.exp(neg2);
    let weighted = tape.mul(sq, inv_var)?;
    let quad = tape.sum(weighted);
    let quad = tape.scale(quad, -0.5);
    let ls = tape.sum(g.log_std);
    let out = tape.sub(quad, ls)?;
    Ok(tape.add_scalar(out, -n * HALF_LN_2PI))
}

/// `KL(a ‖ b)` summed over every component (and every row).
pub fn gaussian_kl(tape: &mut Tape, a: GaussianVar, b: GaussianVar) -> Result<Var> {
    a.check(tape, "gaussian_kl")?;
    b.check(tape, "gaussian_kl")?;
    if tape.shape(a.mean) != tape.shape(b.mean) {
        return Err(Error::shape("gaussian_kl", tape.shape(a.mean), tape.shape(b.mean)));
    }
    let n = tape.value(a.mean).numel() as f64;
    let log_ratio = tape.sub(b.log_std, a.log_std)?;
    let two_a = tape.scale(a.log_std, 2.0);
    let var_a = tape.exp(two_a);
    let diff = tape.sub(a.mean, b.mean)?;
    let sq = tape.square(diff);
    let num = tape.add(var_a, sq)?;
    let neg_two_b = tape.scale(b.log_std, -2.0);
    let inv_var_b = tape.exp(neg_two_b);
    let ratio = tape.mul(num, inv_var_b)?;
    let half_ratio = tape.scale(ratio, 0.5);
    let terms = tape.add(log_ratio, half_ratio)?;
    let total = tape.sum(terms);
    Ok(tape.add_scalar(total, -0.5 * n))
}

/// Closed-form `KL(a ‖ b)` on concrete values.
pub fn kl_divergence(a: &DiagonalGaussian, b: &DiagonalGaussian) -> f64 {
    a.mean
        .iter()
        .zip(&a.log_std)
        .zip(b.mean.iter().zip(&b.log_std))
        .map(|((&ma, &la), (&mb, &lb))| {
            let va = (2.0 * la).exp();
            let vb = (2.0 * lb).exp();
            lb - la + (va + (ma - mb).powi(2)) / (2.0 * vb) - 0.5
        })
        .sum()
}

/// Log-density on concrete values.
pub fn log_density(g: &DiagonalGaussian, x: &[f64]) -> f64 {
    g.mean
        .iter()
        .zip(&g.log_std)
        .zip(x)
        .map(|((&m, &l), &xi)| -l - HALF_LN_2PI - (xi - m).powi(2) / (2.0 * (2.0 * l).exp()))
        .sum()
}
