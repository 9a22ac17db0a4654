use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Pure state of `n_qubits` qubits. Qubit 0 is the most significant bit of
/// the basis index.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl QubitState {
    /// Wraps amplitudes that must already be normalized to 1e-10.
    pub fn new(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != 1usize << n_qubits {
            return Err(Error::Dimension(format!(
                "{} amplitudes for {n_qubits} qubits",
                amplitudes.len()
            )));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!("state norm² {norm}")));
        }
        Ok(Self { n_qubits, amplitudes })
    }

    /// Scales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(n_qubits: usize, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidParameter("cannot normalize a zero vector".into()));
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Self::new(n_qubits, amplitudes)
    }

    /// `|b⟩` for basis index `b`.
    pub fn basis(n_qubits: usize, b: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[b] = Complex64::new(1.0, 0.0);
        Self { n_qubits, amplitudes }
    }

    /// `(|0…0⟩ + |1…1⟩)/√2`.
    pub fn ghz(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        amplitudes[0] = a;
        amplitudes[dim - 1] = a;
        Self { n_qubits, amplitudes }
    }

    /// Equal superposition of the single-excitation basis states.
    pub fn w(n_qubits: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        let a = Complex64::new(1.0 / (n_qubits as f64).sqrt(), 0.0);
        for q in 0..n_qubits {
            amplitudes[1 << q] = a;
        }
        Self { n_qubits, amplitudes }
    }

    /// Haar-random pure state from normalized complex Gaussian amplitudes.
    pub fn haar_random<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> Self {
        let amps = (0..1usize << n_qubits)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::normalized(n_qubits, amps).expect("gaussian vector is nonzero")
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Applies the 2×2 matrix `u` (row-major) to qubit `q` in place.
    pub fn apply_single(&mut self, q: usize, u: &[[Complex64; 2]; 2]) {
        apply_single(&mut self.amplitudes, self.n_qubits, q, u);
    }
}

pub(crate) fn apply_single(amps: &mut [Complex64], n_qubits: usize, q: usize, u: &[[Complex64; 2]; 2]) {
    let bit = 1usize << (n_qubits - 1 - q);
    for i in 0..amps.len() {
        if i & bit == 0 {
            let (a0, a1) = (amps[i], amps[i | bit]);
            amps[i] = u[0][0] * a0 + u[0][1] * a1;
            amps[i | bit] = u[1][0] * a0 + u[1][1] * a1;
        }
    }
}
