use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::state::QubitState;
use crate::error::{Error, Result};

/// Largest chain handled by exact diagonalization.
pub const DEFAULT_MAX_QUBITS: usize = 12;

/// Above this dimension the ground state is found by Lanczos iteration.
const DENSE_LIMIT: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    Signed,
    ForcePositive,
    ForceNegative,
}

/// `n` i.i.d. draws from N(mean, stddev²) with optional sign forcing.
pub fn sample_couplings<R: Rng + ?Sized>(
    mean: f64,
    stddev: f64,
    sign_mode: SignMode,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let normal = Normal::new(mean, stddev)
        .map_err(|e| Error::InvalidParameter(format!("coupling distribution: {e}")))?;
    Ok((0..n)
        .map(|_| {
            let v = normal.sample(rng);
            match sign_mode {
                SignMode::Signed => v,
                SignMode::ForcePositive => v.abs(),
                SignMode::ForceNegative => -v.abs(),
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinModel {
    /// `−(Σ J_i Z_i Z_{i+1} + Σ X_j)`
    Ising,
    /// `−Σ [Δ_i (X_i X_{i+1} + Y_i Y_{i+1}) + Z_i Z_{i+1}]`
    Xxz,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinModelSpec {
    pub model: SpinModel,
    pub n_qubits: usize,
    /// `J_i` or `Δ_i`, one per bond.
    pub couplings: Vec<f64>,
}

/// Off-diagonal part: flips the bits in `mask`, optionally only when the two
/// flipped bits currently differ.
#[derive(Clone, Debug)]
struct FlipTerm {
    mask: usize,
    coeff: f64,
    require_differ: bool,
}

/// Real symmetric Hamiltonian stored as a diagonal plus bit-flip terms.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    n_qubits: usize,
    diag: Vec<f64>,
    flips: Vec<FlipTerm>,
}

/// Builds the open-chain Hamiltonian, refusing chains above `max_qubits`.
pub fn build_hamiltonian(spec: &SpinModelSpec, max_qubits: usize) -> Result<Hamiltonian> {
    let n = spec.n_qubits;
    if n < 2 {
        return Err(Error::InvalidParameter("spin chain needs at least two qubits".into()));
    }
    if n > max_qubits {
        return Err(Error::Capacity(format!(
            "{n} qubits exceeds the exact-diagonalization cap of {max_qubits}; \
             larger chains would need DMRG, which is not provided"
        )));
    }
    if spec.couplings.len() != n - 1 {
        return Err(Error::Dimension(format!(
            "{} couplings for {} bonds",
            spec.couplings.len(),
            n - 1
        )));
    }
    if spec.couplings.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter("non-finite coupling".into()));
    }
    let dim = 1usize << n;
    let bit = |q: usize| 1usize << (n - 1 - q);
    let zz = |b: usize, q: usize| {
        if ((b & bit(q)) == 0) == ((b & bit(q + 1)) == 0) {
            1.0
        } else {
            -1.0
        }
    };
    let mut diag = vec![0.0; dim];
    let mut flips = Vec::new();
    match spec.model {
        SpinModel::Ising => {
            for (b, d) in diag.iter_mut().enumerate() {
                *d = -spec.couplings.iter().enumerate().map(|(q, j)| j * zz(b, q)).sum::<f64>();
            }
            for q in 0..n {
                flips.push(FlipTerm { mask: bit(q), coeff: -1.0, require_differ: false });
            }
        }
        SpinModel::Xxz => {
            for (b, d) in diag.iter_mut().enumerate() {
                *d = -(0..n - 1).map(|q| zz(b, q)).sum::<f64>();
            }
            // XX + YY maps |01⟩ ↔ |10⟩ with weight 2 and kills |00⟩, |11⟩.
            for (q, delta) in spec.couplings.iter().enumerate() {
                flips.push(FlipTerm {
                    mask: bit(q) | bit(q + 1),
                    coeff: -2.0 * delta,
                    require_differ: true,
                });
            }
        }
    }
    Ok(Hamiltonian { n_qubits: n, diag, flips })
}

impl Hamiltonian {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, d), xi) in y.iter_mut().zip(&self.diag).zip(x) {
            *yi = d * xi;
        }
        for t in &self.flips {
            for (b, &xb) in x.iter().enumerate() {
                if t.require_differ && (b & t.mask == 0 || b & t.mask == t.mask) {
                    continue;
                }
                y[b ^ t.mask] += t.coeff * xb;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let mut m = DMatrix::from_diagonal(&DVector::from_vec(self.diag.clone()));
        for t in &self.flips {
            for b in 0..dim {
                if t.require_differ && (b & t.mask == 0 || b & t.mask == t.mask) {
                    continue;
                }
                m[(b ^ t.mask, b)] += t.coeff;
            }
        }
        m
    }

    pub fn expectation(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.apply(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }
}

/// Ground state with a deterministic representative.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    pub state: QubitState,
}

/// Lowest eigenpair of `h`.
///
/// Within a degenerate ground space the representative is the normalized
/// projection of the lowest-index basis vector with nonzero overlap. The global
/// phase is fixed so the first amplitude above 1e-9 is real and positive.
pub fn ground_state(h: &Hamiltonian) -> Result<GroundState> {
    let dim = h.dim();
    let (energy, vec) = if dim <= DENSE_LIMIT {
        dense_ground(&h.to_dense())?
    } else {
        match lanczos_ground(h)? {
            Some(found) => found,
            None => dense_ground(&h.to_dense())?,
        }
    };
    Ok(GroundState { energy, state: fix_phase(h.n_qubits(), vec)? })
}

/// Dense diagonalization with the basis-projection tie-break.
pub fn dense_ground(h: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
    let eig = SymmetricEigen::new(h.clone());
    let e0 = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !e0.is_finite() {
        return Err(Error::Numeric("eigensolver returned non-finite energies".into()));
    }
    let tol = 1e-9 * (1.0 + e0.abs());
    let ground: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] - e0 <= tol)
        .collect();
    let dim = h.nrows();
    if ground.len() == 1 {
        return Ok((e0, eig.eigenvectors.column(ground[0]).iter().cloned().collect()));
    }
    for j in 0..dim {
        let mut proj = vec![0.0; dim];
        for &g in &ground {
            let col = eig.eigenvectors.column(g);
            let c = col[j];
            for (p, v) in proj.iter_mut().zip(col.iter()) {
                *p += c * v;
            }
        }
        let norm = proj.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-6 {
            proj.iter_mut().for_each(|v| *v /= norm);
            return Ok((e0, proj));
        }
    }
    Err(Error::Numeric("degenerate ground space has no basis overlap".into()))
}

/// Lanczos with full reorthogonalization started from the uniform vector.
///
/// Returns `None` when the spectrum looks degenerate at the bottom, so the
/// caller can apply the dense tie-break instead.
fn lanczos_ground(h: &Hamiltonian) -> Result<Option<(f64, Vec<f64>)>> {
    let dim = h.dim();
    let start = vec![1.0 / (dim as f64).sqrt(); dim];
    let Some((e0, v0)) = lanczos_lowest(h, start, &[])? else {
        return Ok(None);
    };
    // A second, deflated run estimates the gap.
    let mut probe: Vec<f64> = (0..dim).map(|i| ((i * 7919 % 104_729) as f64).sin()).collect();
    orthogonalize(&mut probe, &[&v0]);
    if norm(&probe) < 1e-12 {
        return Ok(Some((e0, v0)));
    }
    if let Some((e1, _)) = lanczos_lowest(h, probe, &[&v0])? {
        if e1 - e0 < 1e-7 * (1.0 + e0.abs()) {
            return Ok(None);
        }
    }
    Ok(Some((e0, v0)))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn orthogonalize(v: &mut [f64], against: &[&[f64]]) {
    for _ in 0..2 {
        for q in against {
            let d: f64 = v.iter().zip(q.iter()).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q.iter()).for_each(|(a, b)| *a -= d * b);
        }
    }
}

fn lanczos_lowest(h: &Hamiltonian, start: Vec<f64>, deflate: &[&[f64]]) -> Result<Option<(f64, Vec<f64>)>> {
    let dim = h.dim();
    let max_krylov = dim.min(300);
    let mut current = start;
    for _restart in 0..20 {
        orthogonalize(&mut current, deflate);
        let n0 = norm(&current);
        if n0 < 1e-12 {
            return Ok(None);
        }
        current.iter_mut().for_each(|v| *v /= n0);
        let mut basis: Vec<Vec<f64>> = vec![current.clone()];
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        let mut w = vec![0.0; dim];
        let mut result = None;
        loop {
            let k = basis.len() - 1;
            h.apply(&basis[k], &mut w);
            let a: f64 = w.iter().zip(&basis[k]).map(|(x, y)| x * y).sum();
            alpha.push(a);
            let refs: Vec<&[f64]> = deflate.iter().copied().chain(basis.iter().map(|b| b.as_slice())).collect();
            orthogonalize(&mut w, &refs);
            let b = norm(&w);
            let m = alpha.len();
            let check = m % 10 == 0 || b < 1e-12 || m == max_krylov;
            if check {
                let t = tridiagonal(&alpha, &beta);
                let eig = SymmetricEigen::new(t);
                let (idx, &theta) = eig
                    .eigenvalues
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .expect("nonempty");
                let y = eig.eigenvectors.column(idx);
                let residual = b * y[m - 1].abs();
                let mut ritz = vec![0.0; dim];
                for (j, q) in basis.iter().enumerate() {
                    ritz.iter_mut().zip(q).for_each(|(r, v)| *r += y[j] * v);
                }
                if residual < 1e-11 || b < 1e-12 {
                    result = Some((theta, ritz));
                    break;
                }
                if m == max_krylov {
                    current = ritz;
                    break;
                }
            }
            beta.push(b);
            w.iter_mut().for_each(|v| *v /= b);
            basis.push(std::mem::replace(&mut w, vec![0.0; dim]));
        }
        if let Some((theta, mut v)) = result {
            let nv = norm(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            let mut hv = vec![0.0; dim];
            h.apply(&v, &mut hv);
            let res = hv.iter().zip(&v).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
            if res < 1e-9 {
                return Ok(Some((theta, v)));
            }
            current = v;
        }
    }
    Err(Error::Numeric("Lanczos iteration did not converge".into()))
}

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    t
}

fn fix_phase(n_qubits: usize, v: Vec<f64>) -> Result<QubitState> {
    let sign = v.iter().find(|x| x.abs() > 1e-9).map(|x| x.signum()).unwrap_or(1.0);
    let amps = v.into_iter().map(|x| Complex64::new(sign * x, 0.0)).collect();
    QubitState::normalized(n_qubits, amps)
}
