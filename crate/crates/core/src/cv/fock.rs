use nalgebra::DMatrix;
use num_complex::Complex64;

use super::hermite::hermite_functions;
use crate::error::{Error, Result};

pub const DEFAULT_CUTOFF: usize = 60;

/// Extra Fock levels used internally before cutting back to the requested
/// truncation, so that operator exponentials are accurate on the kept levels.
const PADDING: usize = 40;

/// Weight allowed beyond the truncation before construction fails.
const MAX_TAIL: f64 = 1e-6;

/// Single-mode state on Fock levels `0..=cutoff`, stored as a weighted
/// ensemble `ρ = Σ w_k |v_k⟩⟨v_k|` (one component for pure states).
#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    cutoff: usize,
    weights: Vec<f64>,
    vectors: Vec<Vec<Complex64>>,
}

impl FockState {
    pub fn pure(amplitudes: Vec<Complex64>) -> Result<Self> {
        Self::ensemble(vec![1.0], vec![amplitudes])
    }

    /// Normalizes the total trace to one; every vector must share a length.
    pub fn ensemble(weights: Vec<f64>, vectors: Vec<Vec<Complex64>>) -> Result<Self> {
        let dim = vectors.first().map(Vec::len).unwrap_or(0);
        if dim == 0 || weights.len() != vectors.len() || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::Dimension("inconsistent ensemble".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter("ensemble weights must be nonnegative".into()));
        }
        let trace: f64 = weights
            .iter()
            .zip(&vectors)
            .map(|(w, v)| w * v.iter().map(|a| a.norm_sqr()).sum::<f64>())
            .sum();
        if !(trace > 0.0 && trace.is_finite()) {
            return Err(Error::InvalidParameter("state has zero trace".into()));
        }
        Ok(Self {
            cutoff: dim - 1,
            weights: weights.iter().map(|w| w / trace).collect(),
            vectors,
        })
    }

    /// Highest retained photon number.
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn is_pure(&self) -> bool {
        self.vectors.len() == 1
    }

    pub fn components(&self) -> impl Iterator<Item = (f64, &[Complex64])> {
        self.weights.iter().cloned().zip(self.vectors.iter().map(|v| v.as_slice()))
    }

    /// Amplitudes when the state is pure.
    pub fn amplitudes(&self) -> Option<&[Complex64]> {
        self.is_pure().then(|| self.vectors[0].as_slice())
    }

    pub fn density_matrix(&self) -> DMatrix<Complex64> {
        let d = self.cutoff + 1;
        let mut rho = DMatrix::zeros(d, d);
        for (w, v) in self.components() {
            for i in 0..d {
                for j in 0..d {
                    rho[(i, j)] += v[i] * v[j].conj() * w;
                }
            }
        }
        rho
    }

    /// Diagonal of ρ.
    pub fn photon_distribution(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.cutoff + 1];
        for (w, v) in self.components() {
            for (pn, a) in p.iter_mut().zip(v) {
                *pn += w * a.norm_sqr();
            }
        }
        p
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.photon_distribution().iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn trace(&self) -> f64 {
        self.photon_distribution().iter().sum()
    }

    pub fn purity(&self) -> f64 {
        let rho = self.density_matrix();
        (&rho * &rho).trace().re
    }
}

fn check_tail(name: &str, full: &[Complex64], cutoff: usize) -> Result<()> {
    let total: f64 = full.iter().map(|a| a.norm_sqr()).sum();
    let tail: f64 = full[cutoff + 1..].iter().map(|a| a.norm_sqr()).sum();
    if tail > MAX_TAIL * total {
        return Err(Error::Truncation(format!(
            "{name}: weight {:.2e} beyond photon number {cutoff}",
            tail / total
        )));
    }
    Ok(())
}

/// `(|α⟩ + e^{iφ}|−α⟩)/√N`.
pub fn make_cat(alpha: Complex64, phi: f64, cutoff: usize) -> Result<FockState> {
    if !(alpha.norm().is_finite() && phi.is_finite()) {
        return Err(Error::InvalidParameter("non-finite cat parameters".into()));
    }
    let rel = Complex64::from_polar(1.0, phi);
    let ext = cutoff + PADDING;
    // α^n/√n! by recurrence; the common e^{−|α|²/2} is dropped before normalizing.
    let mut t = Complex64::new(1.0, 0.0);
    let mut full = Vec::with_capacity(ext + 1);
    for n in 0..=ext {
        if n > 0 {
            t = t * alpha / (n as f64).sqrt();
        }
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        full.push(t * (1.0 + rel * sign));
    }
    check_tail("cat state", &full, cutoff)?;
    full.truncate(cutoff + 1);
    FockState::pure(full).map_err(|_| Error::InvalidParameter("cat state vanishes (φ = π, α = 0)".into()))
}

fn annihilation(d: usize) -> DMatrix<Complex64> {
    let mut a = DMatrix::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// `S(s) ρ_th S(s)†` with `S(s) = exp(½(s* a² − s a†²))` and thermal mean
/// photon number `(V − 1)/2`.
pub fn make_squeezed_thermal(variance: f64, s: Complex64, cutoff: usize) -> Result<FockState> {
    if !(variance >= 1.0 && variance.is_finite() && s.norm().is_finite()) {
        return Err(Error::InvalidParameter(format!("thermal variance {variance} must be ≥ 1")));
    }
    let nbar = (variance - 1.0) / 2.0;
    let ext = cutoff + PADDING;
    let d = ext + 1;
    let a = annihilation(d);
    let a2 = &a * &a;
    let ad2 = a2.adjoint();
    let generator = (a2 * s.conj() - ad2 * s) * Complex64::new(0.5, 0.0);
    let squeeze = generator.exp();

    let mut weights = Vec::new();
    let mut vectors = Vec::new();
    let mut lost = 0.0;
    let ratio = nbar / (1.0 + nbar);
    for k in 0..=cutoff {
        let pk = ratio.powi(k as i32) / (1.0 + nbar);
        if pk < 1e-16 {
            break;
        }
        let col: Vec<Complex64> = squeeze.column(k).iter().cloned().collect();
        lost += pk * col[cutoff + 1..].iter().map(|a| a.norm_sqr()).sum::<f64>();
        weights.push(pk);
        vectors.push(col[..=cutoff].to_vec());
    }
    lost += 1.0 - weights.iter().sum::<f64>();
    if lost > MAX_TAIL {
        return Err(Error::Truncation(format!(
            "squeezed thermal state: weight {lost:.2e} beyond photon number {cutoff}"
        )));
    }
    FockState::ensemble(weights, vectors)
}

/// Smallest truncation keeping the `e^{−εn̂}` envelope tail of a GKP state
/// below ~1e-9, and never less than the default.
pub fn gkp_cutoff(epsilon: f64) -> usize {
    DEFAULT_CUTOFF.max((9.0 * std::f64::consts::LN_10 / (2.0 * epsilon)).ceil() as usize)
}

/// `e^{−εn̂}(cos θ|0⟩ + e^{iφ} sin θ|1⟩)` with ideal grid states whose position
/// peaks sit at `x = s√(2π)` (logical 0) and `x = (s + ½)√(2π)` (logical 1).
pub fn make_gkp(epsilon: f64, theta: f64, phi: f64, cutoff: usize) -> Result<FockState> {
    if !(epsilon > 0.0 && epsilon.is_finite() && theta.is_finite() && phi.is_finite()) {
        return Err(Error::InvalidParameter(format!("GKP damping ε = {epsilon} must be positive")));
    }
    let ext = cutoff + PADDING;
    let spacing = (2.0 * std::f64::consts::PI).sqrt();
    // Hermite functions of order ≤ ext vanish well before √(ext + ½) + 6.
    let reach = (ext as f64 + 0.5).sqrt() + 6.0;
    let s_max = (reach / spacing).ceil() as i64;
    let mut logical = [vec![0.0; ext + 1], vec![0.0; ext + 1]];
    for s in -s_max..=s_max {
        for (bit, comb) in logical.iter_mut().enumerate() {
            let x = (s as f64 + 0.5 * bit as f64) * spacing;
            for (c, psi) in comb.iter_mut().zip(hermite_functions(ext, x)) {
                *c += psi;
            }
        }
    }
    let rel = Complex64::from_polar(theta.sin(), phi);
    let full: Vec<Complex64> = (0..=ext)
        .map(|n| {
            let damp = (-epsilon * n as f64).exp();
            (Complex64::new(theta.cos() * logical[0][n], 0.0) + rel * logical[1][n]) * damp
        })
        .collect();
    check_tail("GKP state", &full, cutoff)?;
    FockState::pure(full[..=cutoff].to_vec())
}
