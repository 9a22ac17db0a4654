//! Dense Kronecker-product construction of the chain Hamiltonians.

use gqnq::spin::*;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn pauli_c(p: Option<Pauli>) -> CMat {
    match p {
        None => CMat::identity(2, 2),
        Some(Pauli::X) => CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
        Some(Pauli::Y) => CMat::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
        Some(Pauli::Z) => CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
    }
}

/// Tensor product of single-site operators, site 0 leftmost.
pub fn kron_chain(ops: &[Option<Pauli>]) -> CMat {
    ops.iter().fold(CMat::identity(1, 1), |acc, p| acc.kronecker(&pauli_c(*p)))
}

pub fn site_op(n: usize, sites: &[(usize, Pauli)]) -> CMat {
    let mut ops = vec![None; n];
    for &(q, p) in sites {
        ops[q] = Some(p);
    }
    kron_chain(&ops)
}

/// Term-by-term Kronecker construction of the chain Hamiltonians.
pub fn kron_hamiltonian(spec: &SpinModelSpec) -> CMat {
    let n = spec.n_qubits;
    let dim = 1 << n;
    let mut h = CMat::zeros(dim, dim);
    match spec.model {
        SpinModel::Ising => {
            for (i, j) in spec.couplings.iter().enumerate() {
                h -= site_op(n, &[(i, Pauli::Z), (i + 1, Pauli::Z)]) * c(*j, 0.0);
            }
            for q in 0..n {
                h -= site_op(n, &[(q, Pauli::X)]);
            }
        }
        SpinModel::Xxz => {
            for (i, d) in spec.couplings.iter().enumerate() {
                let xx = site_op(n, &[(i, Pauli::X), (i + 1, Pauli::X)]);
                let yy = site_op(n, &[(i, Pauli::Y), (i + 1, Pauli::Y)]);
                h -= (xx + yy) * c(*d, 0.0);
                h -= site_op(n, &[(i, Pauli::Z), (i + 1, Pauli::Z)]);
            }
        }
    }
    h
}

pub fn random_spec(rng: &mut ChaCha8Rng, model: SpinModel, n: usize) -> SpinModelSpec {
    SpinModelSpec {
        model,
        n_qubits: n,
        couplings: (0..n - 1).map(|_| rng.random_range(-2.0..2.0)).collect(),
    }
}

pub fn real_part(m: &CMat) -> DMatrix<f64> {
    m.map(|z| z.re)
}
