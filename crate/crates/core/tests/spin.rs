use gqnq::spin::*;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::spin_oracle::*;

#[test]
fn couplings_trivial_and_sign_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let v = sample_couplings(1.0, 0.0, SignMode::Signed, 5, &mut rng).unwrap();
    assert_eq!(v, vec![1.0; 5]);
    let v = sample_couplings(-0.5, 0.1, SignMode::ForcePositive, 1000, &mut rng).unwrap();
    assert!(v.iter().all(|&x| x > 0.0));
    let v = sample_couplings(0.5, 0.1, SignMode::ForceNegative, 1000, &mut rng).unwrap();
    assert!(v.iter().all(|&x| x < 0.0));
}

#[test]
fn couplings_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let v = sample_couplings(0.7, 0.1, SignMode::Signed, n, &mut rng).unwrap();
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se_mean = 0.1 / (n as f64).sqrt();
    // Standard error of the sample std for a Gaussian is σ/√(2(n−1)).
    let se_std = 0.1 / (2.0 * (n - 1) as f64).sqrt();
    assert!((mean - 0.7).abs() < 3.0 * se_mean, "mean {mean}");
    assert!((var.sqrt() - 0.1).abs() < 3.0 * se_std, "std {}", var.sqrt());
}

#[test]
fn hamiltonians_match_kronecker_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 2..=4 {
        for model in [SpinModel::Ising, SpinModel::Xxz] {
            for _ in 0..5 {
                let spec = random_spec(&mut rng, model, n);
                let h = build_hamiltonian(&spec, DEFAULT_MAX_QUBITS).unwrap().to_dense();
                let oracle = kron_hamiltonian(&spec);
                assert!(oracle.iter().all(|z| z.im.abs() < 1e-15));
                assert!((&h - real_part(&oracle)).abs().max() < 1e-12);
                assert!((&h - h.transpose()).abs().max() < 1e-12);
            }
        }
    }
}

#[test]
fn sparse_apply_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for model in [SpinModel::Ising, SpinModel::Xxz] {
        let spec = random_spec(&mut rng, model, 7);
        let h = build_hamiltonian(&spec, DEFAULT_MAX_QUBITS).unwrap();
        let x: Vec<f64> = (0..h.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; h.dim()];
        h.apply(&x, &mut y);
        let dense = h.to_dense() * nalgebra::DVector::from_vec(x);
        for (a, b) in y.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn capacity_cap_is_enforced() {
    let spec = SpinModelSpec { model: SpinModel::Ising, n_qubits: 13, couplings: vec![1.0; 12] };
    let err = build_hamiltonian(&spec, DEFAULT_MAX_QUBITS).unwrap_err();
    assert!(matches!(err, gqnq::Error::Capacity(ref msg) if msg.contains("DMRG")));
}

#[test]
fn decoupled_transverse_field() {
    let spec = SpinModelSpec { model: SpinModel::Ising, n_qubits: 2, couplings: vec![0.0] };
    let g = ground_state(&build_hamiltonian(&spec, 12).unwrap()).unwrap();
    assert!((g.energy + 2.0).abs() < 1e-12);
    for a in g.state.amplitudes() {
        assert!((a - c(0.5, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn two_site_ising_closed_form() {
    // In the even sector H = [[−J, −2], [−2, J]], so E₀ = −√(J² + 4).
    for j in [1.0, -0.3, 2.5] {
        let spec = SpinModelSpec { model: SpinModel::Ising, n_qubits: 2, couplings: vec![j] };
        let g = ground_state(&build_hamiltonian(&spec, 12).unwrap()).unwrap();
        assert!((g.energy + (j * j + 4.0_f64).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn classical_limit_tie_break() {
    let spec = SpinModelSpec { model: SpinModel::Xxz, n_qubits: 2, couplings: vec![0.0] };
    let g = ground_state(&build_hamiltonian(&spec, 12).unwrap()).unwrap();
    assert!((g.energy + 1.0).abs() < 1e-12);
    assert_eq!(g.state, QubitState::basis(2, 0));
}

#[test]
fn small_matrix_ground_states() {
    let (e, v) = dense_ground(&DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).unwrap();
    assert_eq!(e, 0.0);
    assert!((v[0].abs() - 1.0).abs() < 1e-15 && v[1] == 0.0);
    let (e, v) = dense_ground(&DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0])).unwrap();
    assert!((e + 1.0).abs() < 1e-12);
    assert!((v[0] * v[1] - 0.5).abs() < 1e-12);
}

#[test]
fn six_qubit_ground_states_match_dense_and_have_small_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for model in [SpinModel::Ising, SpinModel::Xxz] {
        for _ in 0..10 {
            let spec = random_spec(&mut rng, model, 6);
            let h = build_hamiltonian(&spec, 12).unwrap();
            let g = ground_state(&h).unwrap();
            let oracle = SymmetricEigen::new(real_part(&kron_hamiltonian(&spec)));
            let e_min = oracle.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!((g.energy - e_min).abs() < 1e-9);
            let psi: Vec<f64> = g.state.amplitudes().iter().map(|a| a.re).collect();
            let mut hpsi = vec![0.0; psi.len()];
            h.apply(&psi, &mut hpsi);
            let res: f64 = hpsi.iter().zip(&psi).map(|(a, b)| (a - g.energy * b).powi(2)).sum::<f64>().sqrt();
            assert!(res < 1e-9, "residual {res}");
            let first = g.state.amplitudes().iter().find(|a| a.norm() > 1e-9).unwrap();
            assert!(first.re > 0.0 && first.im == 0.0);
        }
    }
}

#[test]
fn lanczos_matches_dense_on_ten_qubits() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (model, mean) in [(SpinModel::Ising, 0.5), (SpinModel::Ising, 1.4), (SpinModel::Xxz, 1.3)] {
        let spec = SpinModelSpec {
            model,
            n_qubits: 10,
            couplings: sample_couplings(mean, 0.1, SignMode::Signed, 9, &mut rng).unwrap(),
        };
        let h = build_hamiltonian(&spec, 12).unwrap();
        let g = ground_state(&h).unwrap();
        let (e, v) = dense_ground(&h.to_dense()).unwrap();
        assert!((g.energy - e).abs() < 1e-9);
        let overlap: f64 = g.state.amplitudes().iter().zip(&v).map(|(a, b)| a.re * b).sum();
        assert!((overlap.abs() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn ghz_and_w_constructions() {
    let ghz = make_rotated_ghz_w(EntangledKind::Ghz, &[[0.0; 3]; 6]).unwrap();
    assert_eq!(ghz, QubitState::ghz(6));
    let w = make_rotated_ghz_w(EntangledKind::W, &[[0.0; 3]; 6]).unwrap();
    for (b, a) in w.amplitudes().iter().enumerate() {
        let expect = if b.count_ones() == 1 { 1.0 / 6f64.sqrt() } else { 0.0 };
        assert!((a.re - expect).abs() < 1e-15 && a.im == 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let max = std::f64::consts::PI / 10.0;
    for kind in [EntangledKind::Ghz, EntangledKind::W] {
        let angles: Vec<[f64; 3]> = (0..6)
            .map(|_| [rng.random_range(0.0..max), rng.random_range(0.0..max), rng.random_range(0.0..max)])
            .collect();
        let s = make_rotated_ghz_w(kind, &angles).unwrap();
        let n: f64 = s.amplitudes().iter().map(|a| a.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
    assert!(make_rotated_ghz_w(EntangledKind::Ghz, &[[0.5, 0.0, 0.0]; 3]).is_err());
}

#[test]
fn local_rotation_matches_matrix_exponential() {
    let (tx, ty, tz) = (0.11, 0.27, 0.05);
    let u = local_rotation(tx, ty, tz);
    let exp = |p: Pauli, t: f64| (pauli_c(Some(p)) * c(0.0, -t)).exp();
    let oracle = exp(Pauli::Z, tz) * exp(Pauli::Y, ty) * exp(Pauli::X, tx);
    for r in 0..2 {
        for k in 0..2 {
            assert!((u[r][k] - oracle[(r, k)]).norm() < 1e-14);
        }
    }
}

#[test]
fn setting_enumeration() {
    assert_eq!(enumerate_settings(6, MeasurementMode::FullLocal).len(), 729);
    assert_eq!(enumerate_settings(10, MeasurementMode::NearestNeighbor).len(), 81);
    let one = enumerate_settings(1, MeasurementMode::FullLocal);
    assert_eq!(
        one,
        vec![
            PauliSetting::FullLocal(vec![Pauli::X]),
            PauliSetting::FullLocal(vec![Pauli::Y]),
            PauliSetting::FullLocal(vec![Pauli::Z])
        ]
    );
    let two = enumerate_settings(2, MeasurementMode::FullLocal);
    assert_eq!(two[1], PauliSetting::parse_local("XY").unwrap());
    assert_eq!(two[3], PauliSetting::parse_local("YX").unwrap());
    let nn = enumerate_settings(4, MeasurementMode::NearestNeighbor);
    assert_eq!(nn[9], PauliSetting::NearestNeighbor { n_qubits: 4, pair: 1, labels: [Pauli::X, Pauli::X] });
}

#[test]
fn parametrization_vectors() {
    let z = parametrize_measurement(&PauliSetting::parse_local("Z").unwrap());
    assert_eq!(z, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0]);
    let x = parametrize_measurement(&PauliSetting::parse_local("X").unwrap());
    assert_eq!(x, vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    let zs = parametrize_measurement(&PauliSetting::parse_local("ZZZZZZ").unwrap());
    assert_eq!(zs.len(), 48);
    assert!(zs.chunks(8).all(|c| c == z.as_slice()));
    let nn = parametrize_measurement(&PauliSetting::NearestNeighbor { n_qubits: 10, pair: 4, labels: [Pauli::Z, Pauli::X] });
    assert_eq!(nn.len(), 17);
    assert_eq!(&nn[..8], z.as_slice());
    assert_eq!(nn[16], 0.5);
}

#[test]
fn born_trivial_cases() {
    let p = born_probabilities(&QubitState::basis(6, 0), &PauliSetting::parse_local("ZZZZZZ").unwrap()).unwrap();
    assert_eq!(p[0], 1.0);
    assert!(p[1..].iter().all(|&x| x == 0.0));
    let p = born_probabilities(&QubitState::basis(1, 0), &PauliSetting::parse_local("X").unwrap()).unwrap();
    assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    let p = born_probabilities(&QubitState::basis(1, 1), &PauliSetting::parse_local("Z").unwrap()).unwrap();
    assert_eq!(p, vec![0.0, 1.0]);
}

/// Eigenvector of `p` for eigenvalue +1 (`bit == 0`) or −1.
fn eigvec(p: Pauli, bit: usize) -> [Complex64; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match (p, bit) {
        (Pauli::X, 0) => [c(h, 0.), c(h, 0.)],
        (Pauli::X, _) => [c(h, 0.), c(-h, 0.)],
        (Pauli::Y, 0) => [c(h, 0.), c(0., h)],
        (Pauli::Y, _) => [c(h, 0.), c(0., -h)],
        (Pauli::Z, 0) => [c(1., 0.), c(0., 0.)],
        (Pauli::Z, _) => [c(0., 0.), c(1., 0.)],
    }
}

/// Brute-force Born rule: overlap with every product eigenvector.
fn brute_force_born(state: &QubitState, labels: &[Pauli]) -> Vec<f64> {
    let n = labels.len();
    (0..1usize << n)
        .map(|outcome| {
            let mut amp = c(0.0, 0.0);
            for (b, a) in state.amplitudes().iter().enumerate() {
                let mut e = c(1.0, 0.0);
                for q in 0..n {
                    let ob = (outcome >> (n - 1 - q)) & 1;
                    let bb = (b >> (n - 1 - q)) & 1;
                    e *= eigvec(labels[q], ob)[bb];
                }
                amp += e.conj() * a;
            }
            amp.norm_sqr()
        })
        .collect()
}

#[test]
fn ghz_all_x_statistics() {
    let labels = vec![Pauli::X; 6];
    let p = born_probabilities(&QubitState::ghz(6), &PauliSetting::FullLocal(labels.clone())).unwrap();
    let oracle = brute_force_born(&QubitState::ghz(6), &labels);
    for (o, (a, b)) in p.iter().zip(&oracle).enumerate() {
        let expect = if (o as u32).count_ones() % 2 == 0 { 1.0 / 32.0 } else { 0.0 };
        assert!((a - expect).abs() < 1e-12);
        assert!((b - expect).abs() < 1e-12);
    }
}

#[test]
fn born_matches_brute_force_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let settings = enumerate_settings(4, MeasurementMode::FullLocal);
    for _ in 0..5 {
        let s = QubitState::haar_random(4, &mut rng);
        for setting in settings.iter().step_by(7) {
            let PauliSetting::FullLocal(labels) = setting else { unreachable!() };
            let p = born_probabilities(&s, setting).unwrap();
            for (a, b) in p.iter().zip(brute_force_born(&s, labels)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn nearest_neighbour_is_pair_marginal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s = QubitState::haar_random(5, &mut rng);
    for pair in 0..4 {
        for a in Pauli::ALL {
            for b in Pauli::ALL {
                let mut labels = vec![Pauli::Z; 5];
                labels[pair] = a;
                labels[pair + 1] = b;
                let full = born_probabilities(&s, &PauliSetting::FullLocal(labels)).unwrap();
                let mut marginal = [0.0; 4];
                for (o, p) in full.iter().enumerate() {
                    marginal[(o >> (3 - pair)) & 3] += p;
                }
                let nn = born_probabilities(&s, &PauliSetting::NearestNeighbor { n_qubits: 5, pair, labels: [a, b] }).unwrap();
                for (x, y) in nn.iter().zip(marginal) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn shots_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    assert_eq!(sample_shots(&[1.0, 0.0, 0.0], 37, &mut rng).unwrap(), vec![1.0, 0.0, 0.0]);
    let dist = [0.1, 0.25, 0.3, 0.35];
    let f = sample_shots(&dist, 10, &mut rng).unwrap();
    for x in &f {
        let tenths = x * 10.0;
        assert!((tenths - tenths.round()).abs() < 1e-12);
    }
    assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert!(sample_shots(&dist, 0, &mut rng).is_err());
}

#[test]
fn shots_are_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let dist = [0.1, 0.25, 0.3, 0.35];
    let (reps, n) = (10_000, 50);
    let mut mean = [0.0; 4];
    for _ in 0..reps {
        for (m, f) in mean.iter_mut().zip(sample_shots(&dist, n, &mut rng).unwrap()) {
            *m += f / reps as f64;
        }
    }
    for (m, p) in mean.iter().zip(dist) {
        let se = (p * (1.0 - p) / (n * reps) as f64).sqrt();
        assert!((m - p).abs() < 3.0 * se, "{m} vs {p}");
    }
}

fn arb_state(n: usize) -> impl Strategy<Value = QubitState> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << n).prop_filter_map("nonzero", move |v| {
        QubitState::normalized(n, v.into_iter().map(|(r, i)| c(r, i)).collect()).ok()
    })
}

fn arb_labels(n: usize) -> impl Strategy<Value = Vec<Pauli>> {
    prop::collection::vec(prop::sample::select(Pauli::ALL.to_vec()), n)
}

proptest! {
    #[test]
    fn born_sums_to_one_and_ignores_global_phase(
        s in arb_state(4), labels in arb_labels(4), phase in 0.0f64..6.3
    ) {
        let setting = PauliSetting::FullLocal(labels);
        let p = born_probabilities(&s, &setting).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let rotated: Vec<Complex64> = s.amplitudes().iter().map(|a| a * Complex64::from_polar(1.0, phase)).collect();
        let q = born_probabilities(&QubitState::new(4, rotated).unwrap(), &setting).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn product_states_factorize(
        singles in prop::collection::vec(arb_state(1), 3), labels in arb_labels(3)
    ) {
        let mut amps = vec![c(1.0, 0.0)];
        for s in &singles {
            amps = amps.iter().flat_map(|a| s.amplitudes().iter().map(move |b| a * b)).collect();
        }
        let joint = born_probabilities(&QubitState::new(3, amps).unwrap(), &PauliSetting::FullLocal(labels.clone())).unwrap();
        let parts: Vec<Vec<f64>> = singles.iter().zip(&labels)
            .map(|(s, l)| born_probabilities(s, &PauliSetting::FullLocal(vec![*l])).unwrap())
            .collect();
        for (o, p) in joint.iter().enumerate() {
            let f = parts[0][o >> 2] * parts[1][(o >> 1) & 1] * parts[2][o & 1];
            prop_assert!((p - f).abs() < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_is_hermitian(couplings in prop::collection::vec(-3.0f64..3.0, 4), xxz in any::<bool>()) {
        let model = if xxz { SpinModel::Xxz } else { SpinModel::Ising };
        let h = build_hamiltonian(&SpinModelSpec { model, n_qubits: 5, couplings }, 12).unwrap().to_dense();
        prop_assert!((&h - h.transpose()).abs().max() < 1e-12);
    }
}
