use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::state::{apply_single, QubitState};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> [[Complex64; 2]; 2] {
        match self {
            Pauli::X => [[ZERO, ONE], [ONE, ZERO]],
            Pauli::Y => [[ZERO, -I], [I, ZERO]],
            Pauli::Z => [[ONE, ZERO], [ZERO, -ONE]],
        }
    }

    /// Rows are the +1 and −1 eigenvectors (conjugated), so applying this
    /// maps the eigenbasis onto the computational basis.
    pub fn eigenbasis_rotation(self) -> [[Complex64; 2]; 2] {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        match self {
            Pauli::X => [[h, h], [h, -h]],
            Pauli::Y => [[h, -I * h], [h, I * h]],
            Pauli::Z => [[ONE, ZERO], [ZERO, ONE]],
        }
    }

    /// Row-major `(Re, Im)` entries.
    pub fn entries(self) -> [f64; 8] {
        let m = self.matrix();
        let mut out = [0.0; 8];
        for (k, z) in m.iter().flatten().enumerate() {
            out[2 * k] = z.re;
            out[2 * k + 1] = z.im;
        }
        out
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    FullLocal,
    NearestNeighbor,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PauliSetting {
    /// One label per qubit.
    FullLocal(Vec<Pauli>),
    /// Labels on qubits `pair` and `pair + 1` of an `n_qubits` chain.
    NearestNeighbor {
        n_qubits: usize,
        pair: usize,
        labels: [Pauli; 2],
    },
}

impl PauliSetting {
    pub fn parse_local(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| Pauli::from_char(c).ok_or_else(|| Error::InvalidParameter(format!("bad Pauli label `{c}`"))))
            .collect::<Result<Vec<_>>>()
            .map(PauliSetting::FullLocal)
    }

    pub fn measured_qubits(&self) -> usize {
        match self {
            PauliSetting::FullLocal(l) => l.len(),
            PauliSetting::NearestNeighbor { .. } => 2,
        }
    }

    pub fn outcome_count(&self) -> usize {
        1 << self.measured_qubits()
    }
}

/// All settings for a chain of `n_qubits`, in lexicographic order X < Y < Z
/// with qubit 0 varying slowest.
pub fn enumerate_settings(n_qubits: usize, mode: MeasurementMode) -> Vec<PauliSetting> {
    match mode {
        MeasurementMode::FullLocal => {
            let total = 3usize.pow(n_qubits as u32);
            (0..total)
                .map(|mut idx| {
                    let mut labels = vec![Pauli::X; n_qubits];
                    for q in (0..n_qubits).rev() {
                        labels[q] = Pauli::ALL[idx % 3];
                        idx /= 3;
                    }
                    PauliSetting::FullLocal(labels)
                })
                .collect()
        }
        MeasurementMode::NearestNeighbor => {
            let mut out = Vec::with_capacity(9 * n_qubits.saturating_sub(1));
            for pair in 0..n_qubits.saturating_sub(1) {
                for a in Pauli::ALL {
                    for b in Pauli::ALL {
                        out.push(PauliSetting::NearestNeighbor { n_qubits, pair, labels: [a, b] });
                    }
                }
            }
            out
        }
    }
}

/// The network-facing vector `m`: 8 reals per measured qubit, plus the pair
/// index scaled to [0, 1] in nearest-neighbour mode.
pub fn parametrize_measurement(setting: &PauliSetting) -> Vec<f64> {
    match setting {
        PauliSetting::FullLocal(labels) => labels.iter().flat_map(|p| p.entries()).collect(),
        PauliSetting::NearestNeighbor { n_qubits, pair, labels } => {
            let mut v: Vec<f64> = labels.iter().flat_map(|p| p.entries()).collect();
            let span = n_qubits.saturating_sub(2);
            v.push(if span == 0 { 0.0 } else { *pair as f64 / span as f64 });
            v
        }
    }
}

/// Outcome probabilities; outcome bit 0 means eigenvalue +1 and the first
/// measured qubit is the most significant bit.
pub fn born_probabilities(state: &QubitState, setting: &PauliSetting) -> Result<Vec<f64>> {
    let n = state.n_qubits();
    let mut amps = state.amplitudes().to_vec();
    match setting {
        PauliSetting::FullLocal(labels) => {
            if labels.len() != n {
                return Err(Error::Dimension(format!(
                    "setting on {} qubits for a {n}-qubit state",
                    labels.len()
                )));
            }
            for (q, p) in labels.iter().enumerate() {
                if *p != Pauli::Z {
                    apply_single(&mut amps, n, q, &p.eigenbasis_rotation());
                }
            }
            Ok(amps.iter().map(|a| a.norm_sqr()).collect())
        }
        PauliSetting::NearestNeighbor { n_qubits, pair, labels } => {
            if *n_qubits != n || pair + 1 >= n {
                return Err(Error::Dimension(format!(
                    "pair {pair} of a {n_qubits}-qubit chain on a {n}-qubit state"
                )));
            }
            for (off, p) in labels.iter().enumerate() {
                if *p != Pauli::Z {
                    apply_single(&mut amps, n, pair + off, &p.eigenbasis_rotation());
                }
            }
            let shift = n - 2 - pair;
            let mut probs = [0.0; 4];
            for (i, a) in amps.iter().enumerate() {
                probs[(i >> shift) & 3] += a.norm_sqr();
            }
            Ok(probs.to_vec())
        }
    }
}

/// Empirical frequencies of `n_shots` independent draws from `dist`.
pub fn sample_shots<R: Rng + ?Sized>(dist: &[f64], n_shots: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n_shots == 0 {
        return Err(Error::InvalidParameter("n_shots must be at least 1".into()));
    }
    let total: f64 = dist.iter().sum();
    let mut counts = vec![0usize; dist.len()];
    for _ in 0..n_shots {
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (j, &p) in dist.iter().enumerate() {
            acc += p;
            if p > 0.0 {
                pick = Some(j);
                if u < acc {
                    break;
                }
            }
        }
        let j = pick.ok_or_else(|| Error::InvalidParameter("distribution has no mass".into()))?;
        counts[j] += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / n_shots as f64).collect())
}

/// `exp(−iθz σz) exp(−iθy σy) exp(−iθx σx)`.
pub fn local_rotation(theta_x: f64, theta_y: f64, theta_z: f64) -> [[Complex64; 2]; 2] {
    let rx = pauli_exp(Pauli::X, theta_x);
    let ry = pauli_exp(Pauli::Y, theta_y);
    let rz = pauli_exp(Pauli::Z, theta_z);
    mul2(&rz, &mul2(&ry, &rx))
}

/// `exp(−iθσ) = cos θ I − i sin θ σ`.
fn pauli_exp(p: Pauli, theta: f64) -> [[Complex64; 2]; 2] {
    let s = p.matrix();
    let (c, sn) = (theta.cos(), theta.sin());
    let mut out = [[ZERO; 2]; 2];
    for r in 0..2 {
        for k in 0..2 {
            let id = if r == k { c } else { 0.0 };
            out[r][k] = Complex64::new(id, 0.0) - I * sn * s[r][k];
        }
    }
    out
}

fn mul2(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let mut out = [[ZERO; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntangledKind {
    Ghz,
    W,
}

/// `⊗ U_i` applied to GHZ or W; `angles[i] = (θx, θy, θz)` for qubit `i`.
pub fn make_rotated_ghz_w(kind: EntangledKind, angles: &[[f64; 3]]) -> Result<QubitState> {
    let n = angles.len();
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two qubits".into()));
    }
    let max = std::f64::consts::PI / 10.0;
    if angles.iter().flatten().any(|t| !(0.0..=max).contains(t)) {
        return Err(Error::InvalidParameter("rotation angles must lie in [0, π/10]".into()));
    }
    let mut state = match kind {
        EntangledKind::Ghz => QubitState::ghz(n),
        EntangledKind::W => QubitState::w(n),
    };
    for (q, [tx, ty, tz]) in angles.iter().enumerate() {
        state.apply_single(q, &local_rotation(*tx, *ty, *tz));
    }
    Ok(state)
}
