use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::fock::FockState;
use super::hermite::hermite_functions;
use crate::error::{Error, Result};

pub const N_BINS: usize = 100;
pub const X_LIMIT: f64 = 6.0;
pub const BIN_WIDTH: f64 = 2.0 * X_LIMIT / N_BINS as f64;
/// Simpson subintervals per bin.
const SUBDIV: usize = 8;
const H: f64 = BIN_WIDTH / SUBDIV as f64;

/// Edges of the 100 equal bins over [−6, 6].
pub fn bin_edges() -> Vec<f64> {
    (0..=N_BINS).map(|i| -X_LIMIT + i as f64 * BIN_WIDTH).collect()
}

/// Half-width beyond which every Hermite function up to `cutoff` is negligible.
fn reach(cutoff: usize) -> f64 {
    (cutoff as f64 + 0.5).sqrt() + 4.0
}

fn tail_bins(cutoff: usize) -> usize {
    ((reach(cutoff) - X_LIMIT) / BIN_WIDTH).ceil().max(0.0) as usize
}

/// Hermite functions tabulated on the Simpson grid, reusable across states
/// and phases with truncation up to `max_cutoff`.
#[derive(Clone, Debug)]
pub struct HomodyneGrid {
    max_cutoff: usize,
    tail: usize,
    /// Row `i` holds `ψ_n(x_i)` for `x_i = −6 − tail·Δ + i·h`.
    psi: DMatrix<f64>,
}

impl HomodyneGrid {
    pub fn new(max_cutoff: usize) -> Self {
        let tail = tail_bins(max_cutoff);
        let points = (N_BINS + 2 * tail) * SUBDIV + 1;
        let x0 = -X_LIMIT - tail as f64 * BIN_WIDTH;
        let mut psi = DMatrix::zeros(points, max_cutoff + 1);
        for i in 0..points {
            for (n, v) in hermite_functions(max_cutoff, x0 + i as f64 * H).into_iter().enumerate() {
                psi[(i, n)] = v;
            }
        }
        Self { max_cutoff, tail, psi }
    }

    pub fn max_cutoff(&self) -> usize {
        self.max_cutoff
    }

    /// Binned outcome distribution of the quadrature
    /// `(e^{iθ}â† + e^{−iθ}â)/2`; mass beyond ±6 joins the edge bins.
    pub fn distribution(&self, state: &FockState, theta: f64) -> Result<Vec<f64>> {
        let d = state.cutoff() + 1;
        if state.cutoff() > self.max_cutoff {
            return Err(Error::Dimension(format!(
                "state truncated at {} exceeds grid cutoff {}",
                state.cutoff(),
                self.max_cutoff
            )));
        }
        let used_tail = tail_bins(state.cutoff()).min(self.tail);
        let row0 = (self.tail - used_tail) * SUBDIV;
        let rows = (N_BINS + 2 * used_tail) * SUBDIV + 1;

        // Columns √w_k · c_n e^{−inθ} of the rotated ensemble.
        let k = state.components().count();
        let mut c_re = DMatrix::zeros(d, k);
        let mut c_im = DMatrix::zeros(d, k);
        let phases: Vec<_> = (0..d).map(|n| num_complex::Complex64::from_polar(1.0, -(n as f64) * theta)).collect();
        for (j, (w, v)) in state.components().enumerate() {
            let sw = w.sqrt();
            for n in 0..d {
                let z = v[n] * phases[n] * sw;
                c_re[(n, j)] = z.re;
                c_im[(n, j)] = z.im;
            }
        }
        let psi = self.psi.view((row0, 0), (rows, d));
        let a_re = psi * c_re;
        let a_im = psi * c_im;
        let density: Vec<f64> = (0..rows)
            .map(|i| {
                a_re.row(i).iter().map(|v| v * v).sum::<f64>() + a_im.row(i).iter().map(|v| v * v).sum::<f64>()
            })
            .collect();

        let total_bins = N_BINS + 2 * used_tail;
        let mut probs = vec![0.0; N_BINS];
        for b in 0..total_bins {
            let seg = &density[b * SUBDIV..=(b + 1) * SUBDIV];
            let mut acc = seg[0] + seg[SUBDIV];
            for (j, v) in seg.iter().enumerate().take(SUBDIV).skip(1) {
                acc += if j % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mass = acc * H / 3.0;
            let target = b.saturating_sub(used_tail).min(N_BINS - 1);
            probs[target] += mass;
        }
        normalize(&mut probs)?;
        Ok(probs)
    }
}

/// One-shot binned homodyne distribution; prefer a shared [`HomodyneGrid`]
/// when evaluating many phases.
pub fn homodyne_distribution(state: &FockState, theta: f64) -> Result<Vec<f64>> {
    HomodyneGrid::new(state.cutoff()).distribution(state, theta)
}

fn normalize(p: &mut [f64]) -> Result<()> {
    p.iter_mut().for_each(|v| *v = v.max(0.0));
    let total: f64 = p.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Numeric("distribution has no mass".into()));
    }
    p.iter_mut().for_each(|v| *v /= total);
    Ok(())
}

/// Adds `σ·Δ·ξ_j` to every bin (Δ the bin width), clamps at zero and
/// renormalizes. Falls back to the input if every bin clamps to zero.
pub fn add_probability_noise<R: Rng + ?Sized>(dist: &[f64], sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise σ = {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(dist.to_vec());
    }
    let mut out: Vec<f64> = dist
        .iter()
        .map(|p| p + sigma * BIN_WIDTH * rng.sample::<f64, _>(StandardNormal))
        .collect();
    if normalize(&mut out).is_err() {
        return Ok(dist.to_vec());
    }
    Ok(out)
}

/// `θ + N(0, σ²)` wrapped into [0, π).
pub fn jitter_phase<R: Rng + ?Sized>(theta: f64, sigma: f64, rng: &mut R) -> Result<f64> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("phase jitter σ = {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(theta);
    }
    let t = (theta + sigma * rng.sample::<f64, _>(StandardNormal)).rem_euclid(std::f64::consts::PI);
    // rem_euclid can round up to exactly π for tiny negative inputs.
    Ok(if t >= std::f64::consts::PI { 0.0 } else { t })
}

/// How a quadrature phase is presented to the network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseEncoding {
    /// `(cos 2θ, sin 2θ)`, continuous across θ = 0 ≡ π.
    #[default]
    CosSin,
    /// `θ/π`.
    Raw,
}

impl PhaseEncoding {
    pub fn encode(self, theta: f64) -> Vec<f64> {
        match self {
            PhaseEncoding::CosSin => vec![(2.0 * theta).cos(), (2.0 * theta).sin()],
            PhaseEncoding::Raw => vec![theta / std::f64::consts::PI],
        }
    }

    pub fn dim(self) -> usize {
        match self {
            PhaseEncoding::CosSin => 2,
            PhaseEncoding::Raw => 1,
        }
    }
}
