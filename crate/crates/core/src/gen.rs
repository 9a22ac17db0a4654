//! Seeded generation of training and test datasets.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cv::{CvFamily, CvStateSpec, HomodyneGrid, PhaseEncoding};
use crate::data::{Dataset, DatasetHeader, DatasetKind, MeasurementRecord, StateExample, StateMeta};
use crate::error::{Error, Result};
use crate::spin::{
    born_probabilities, build_hamiltonian, enumerate_settings, ground_state, make_rotated_ghz_w,
    parametrize_measurement, sample_couplings, EntangledKind, MeasurementMode, Pauli, PauliSetting,
    QubitState, SignMode, SpinModel, SpinModelSpec, DEFAULT_MAX_QUBITS,
};
use crate::training::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinFamily {
    IsingFerro,
    IsingAntiferro,
    IsingNoBias,
    XxzFerro,
    XxzXy,
    Ghz,
    W,
}

fn grid(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|i| i as f64 / 10.0).collect()
}

impl SpinFamily {
    pub const ALL: [SpinFamily; 7] = [
        SpinFamily::IsingFerro,
        SpinFamily::IsingAntiferro,
        SpinFamily::IsingNoBias,
        SpinFamily::XxzFerro,
        SpinFamily::XxzXy,
        SpinFamily::Ghz,
        SpinFamily::W,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpinFamily::IsingFerro => "ising_ferro",
            SpinFamily::IsingAntiferro => "ising_antiferro",
            SpinFamily::IsingNoBias => "ising_no_bias",
            SpinFamily::XxzFerro => "xxz_ferro",
            SpinFamily::XxzXy => "xxz_xy",
            SpinFamily::Ghz => "ghz",
            SpinFamily::W => "w",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Mean couplings swept by the family; a single 0 for GHZ and W.
    pub fn default_groups(self) -> Vec<f64> {
        match self {
            SpinFamily::IsingFerro => grid(1, 15),
            SpinFamily::IsingAntiferro => grid(-15, -1),
            SpinFamily::IsingNoBias | SpinFamily::Ghz | SpinFamily::W => vec![0.0],
            SpinFamily::XxzFerro => grid(-9, 9),
            SpinFamily::XxzXy => grid(-15, -11).into_iter().chain(grid(11, 15)).collect(),
        }
    }

    /// `(train, test)` states per group at full scale.
    pub fn default_counts(self) -> (usize, usize) {
        match self {
            SpinFamily::Ghz | SpinFamily::W => (800, 200),
            _ => (40, 10),
        }
    }

    fn sign_mode(self) -> SignMode {
        match self {
            SpinFamily::IsingFerro => SignMode::ForcePositive,
            SpinFamily::IsingAntiferro => SignMode::ForceNegative,
            _ => SignMode::Signed,
        }
    }

    /// One random state of the family at mean coupling `group`.
    pub fn sample_state<R: Rng + ?Sized>(self, n_qubits: usize, group: f64, coupling_std: f64, rng: &mut R) -> Result<QubitState> {
        let model = match self {
            SpinFamily::Ghz | SpinFamily::W => {
                let kind = if self == SpinFamily::Ghz { EntangledKind::Ghz } else { EntangledKind::W };
                let angles: Vec<[f64; 3]> = (0..n_qubits)
                    .map(|_| std::array::from_fn(|_| rng.random_range(0.0..=PI / 10.0)))
                    .collect();
                return make_rotated_ghz_w(kind, &angles);
            }
            SpinFamily::XxzFerro | SpinFamily::XxzXy => SpinModel::Xxz,
            _ => SpinModel::Ising,
        };
        let couplings = sample_couplings(group, coupling_std, self.sign_mode(), n_qubits - 1, rng)?;
        let h = build_hamiltonian(&SpinModelSpec { model, n_qubits, couplings }, DEFAULT_MAX_QUBITS)?;
        Ok(ground_state(&h)?.state)
    }
}

fn pauli_char(p: Pauli) -> char {
    match p {
        Pauli::X => 'X',
        Pauli::Y => 'Y',
        Pauli::Z => 'Z',
    }
}

pub fn setting_label(s: &PauliSetting) -> String {
    match s {
        PauliSetting::FullLocal(l) => l.iter().map(|&p| pauli_char(p)).collect(),
        PauliSetting::NearestNeighbor { pair, labels, .. } => {
            format!("{pair}:{}{}", pauli_char(labels[0]), pauli_char(labels[1]))
        }
    }
}

pub fn parse_setting_label(label: &str, n_qubits: usize) -> Result<PauliSetting> {
    match label.split_once(':') {
        None => PauliSetting::parse_local(label),
        Some((pair, l)) => {
            let pair: usize = pair.parse().map_err(|_| Error::Format(format!("bad setting label `{label}`")))?;
            let labels: Vec<Pauli> = l.chars().filter_map(Pauli::from_char).collect();
            if labels.len() != 2 || l.chars().count() != 2 {
                return Err(Error::Format(format!("bad setting label `{label}`")));
            }
            Ok(PauliSetting::NearestNeighbor { n_qubits, pair, labels: [labels[0], labels[1]] })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinGenConfig {
    pub n_qubits: usize,
    pub mode: MeasurementMode,
    pub families: Vec<SpinFamily>,
    /// Replaces the default sweep of every listed family.
    pub groups: Option<Vec<f64>>,
    /// Multiplies the default per-group counts (at least one state remains).
    pub scale_factor: f64,
    pub train_per_group: Option<usize>,
    pub test_per_group: Option<usize>,
    /// Restricts `M` to this many settings drawn once at random.
    pub measurement_subset: Option<usize>,
    pub coupling_std: f64,
    pub seed: u64,
}

impl Default for SpinGenConfig {
    fn default() -> Self {
        Self {
            n_qubits: 6,
            mode: MeasurementMode::FullLocal,
            families: vec![SpinFamily::IsingFerro],
            groups: None,
            scale_factor: 1.0,
            train_per_group: None,
            test_per_group: None,
            measurement_subset: None,
            coupling_std: 0.1,
            seed: 0,
        }
    }
}

fn scaled(n: usize, factor: f64) -> usize {
    ((n as f64 * factor).round() as usize).max(1)
}

/// Picks `subset` of `total` indices (sorted), or all of them.
fn choose_measurements<R: Rng + ?Sized>(total: usize, subset: Option<usize>, rng: &mut R) -> Result<Vec<usize>> {
    match subset {
        None => Ok((0..total).collect()),
        Some(n) if n == 0 || n > total => Err(Error::InvalidParameter(format!(
            "measurement subset of {n} from {total} measurements"
        ))),
        Some(n) => {
            let mut idx = sample(rng, total, n).into_vec();
            idx.sort_unstable();
            Ok(idx)
        }
    }
}

/// Records of `state` for every setting, in order.
pub fn spin_records(state: &QubitState, settings: &[PauliSetting]) -> Result<Vec<MeasurementRecord>> {
    settings
        .iter()
        .map(|s| Ok(MeasurementRecord::new(parametrize_measurement(s), born_probabilities(state, s)?)))
        .collect()
}

/// Ground-state and entangled-state datasets; returns `(train, test)`.
pub fn generate_spin(cfg: &SpinGenConfig) -> Result<(Dataset, Dataset)> {
    if cfg.n_qubits < 2 || cfg.families.is_empty() || !(cfg.scale_factor > 0.0) || !(cfg.coupling_std >= 0.0) {
        return Err(Error::InvalidParameter("spin generation needs ≥ 2 qubits, a family and positive scale".into()));
    }
    let all = enumerate_settings(cfg.n_qubits, cfg.mode);
    let chosen = choose_measurements(all.len(), cfg.measurement_subset, &mut stream_rng(cfg.seed, u64::MAX))?;
    let settings: Vec<PauliSetting> = chosen.iter().map(|&i| all[i].clone()).collect();

    let mut jobs = Vec::new();
    for &family in &cfg.families {
        let groups = cfg.groups.clone().unwrap_or_else(|| family.default_groups());
        let (tr, te) = family.default_counts();
        let n_train = cfg.train_per_group.unwrap_or_else(|| scaled(tr, cfg.scale_factor));
        let n_test = cfg.test_per_group.unwrap_or_else(|| scaled(te, cfg.scale_factor));
        for &g in &groups {
            for i in 0..n_train + n_test {
                jobs.push((family, g, i < n_train));
            }
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (idx, &(family, group, is_train)) in jobs.iter().enumerate() {
        let mut rng = stream_rng(cfg.seed, idx as u64);
        let state = family.sample_state(cfg.n_qubits, group, cfg.coupling_std, &mut rng)?;
        let example = StateExample {
            records: spin_records(&state, &settings)?,
            meta: StateMeta { family: family.name().into(), group, cv: None },
        };
        if is_train { train.push(example) } else { test.push(example) }
    }
    let header = |split: &str| DatasetHeader {
        kind: DatasetKind::Spin,
        families: cfg.families.iter().map(|f| f.name().to_string()).collect(),
        n_qubits: Some(cfg.n_qubits),
        mode: Some(cfg.mode),
        m_dim: parametrize_measurement(&settings[0]).len(),
        k: settings[0].outcome_count(),
        n_measurements: settings.len(),
        seed: cfg.seed,
        split: split.into(),
        settings: settings.iter().map(setting_label).collect(),
        phases: Vec::new(),
        encoding: None,
    };
    Ok((Dataset { header: header("train"), states: train }, Dataset { header: header("test"), states: test }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvGenConfig {
    pub families: Vec<CvFamily>,
    /// Total states across families, split evenly between them.
    pub n_states: usize,
    pub test_fraction: f64,
    /// Size of `M`: phases drawn once, uniformly in [0, π).
    pub n_phases: usize,
    pub encoding: PhaseEncoding,
    /// Use these states (cycled) instead of random ones.
    pub fixed: Vec<CvStateSpec>,
    pub seed: u64,
}

impl Default for CvGenConfig {
    fn default() -> Self {
        Self {
            families: CvFamily::ALL.to_vec(),
            n_states: 10000,
            test_fraction: 0.2,
            n_phases: 300,
            encoding: PhaseEncoding::CosSin,
            fixed: Vec::new(),
            seed: 0,
        }
    }
}

/// Uniform draw from a family's parameter ranges.
pub fn sample_cv_spec<R: Rng + ?Sized>(family: CvFamily, rng: &mut R) -> CvStateSpec {
    match family {
        CvFamily::SqueezedThermal => {
            let s = Complex64::from_polar(rng.random_range(0.0..=0.5), rng.random_range(0.0..=PI));
            CvStateSpec::SqueezedThermal { variance: rng.random_range(1.0..=2.0), s_re: s.re, s_im: s.im }
        }
        CvFamily::Cat => {
            let a = Complex64::from_polar(rng.random_range(1.0..=3.0), rng.random_range(0.0..2.0 * PI));
            let phi = rng.random_range(0..=8) as f64 * PI / 8.0;
            CvStateSpec::Cat { alpha_re: a.re, alpha_im: a.im, phi }
        }
        CvFamily::Gkp => CvStateSpec::Gkp {
            epsilon: rng.random_range(0.05..=0.2),
            theta: rng.random_range(0.0..2.0 * PI),
            phi: rng.random_range(0.0..=PI),
        },
    }
}

/// Records of `spec` for every phase, in order.
pub fn cv_records(spec: &CvStateSpec, phases: &[f64], encoding: PhaseEncoding, grid: &HomodyneGrid) -> Result<Vec<MeasurementRecord>> {
    let state = spec.build()?;
    phases
        .iter()
        .map(|&t| Ok(MeasurementRecord::new(encoding.encode(t), grid.distribution(&state, t)?)))
        .collect()
}

/// Homodyne grid able to hold every state in `specs`.
pub fn grid_for(specs: &[CvStateSpec]) -> HomodyneGrid {
    HomodyneGrid::new(specs.iter().map(|s| s.cutoff()).max().unwrap_or(crate::cv::DEFAULT_CUTOFF))
}

/// Continuous-variable dataset; the last `test_fraction` of each family's
/// states forms the test split. Returns `(train, test)`.
pub fn generate_cv(cfg: &CvGenConfig) -> Result<(Dataset, Dataset)> {
    if cfg.n_phases < 2 || !(0.0..1.0).contains(&cfg.test_fraction) || cfg.n_states == 0 {
        return Err(Error::InvalidParameter("cv generation needs ≥ 2 phases, states and a test fraction in [0, 1)".into()));
    }
    let mut prng = stream_rng(cfg.seed, u64::MAX);
    let phases: Vec<f64> = (0..cfg.n_phases).map(|_| prng.random_range(0.0..PI)).collect();

    let mut specs: Vec<(CvStateSpec, bool)> = Vec::new();
    if cfg.fixed.is_empty() {
        if cfg.families.is_empty() {
            return Err(Error::InvalidParameter("no families requested".into()));
        }
        let per = cfg.n_states.div_ceil(cfg.families.len());
        let n_test = (per as f64 * cfg.test_fraction).round() as usize;
        let mut idx = 0u64;
        for &f in &cfg.families {
            for i in 0..per {
                let spec = sample_cv_spec(f, &mut stream_rng(cfg.seed, idx));
                idx += 1;
                specs.push((spec, i < per - n_test));
            }
        }
    } else {
        for s in &cfg.fixed {
            s.validate()?;
        }
        let n_test = (cfg.n_states as f64 * cfg.test_fraction).round() as usize;
        for i in 0..cfg.n_states {
            specs.push((cfg.fixed[i % cfg.fixed.len()], i < cfg.n_states - n_test));
        }
    }
    let all: Vec<CvStateSpec> = specs.iter().map(|s| s.0).collect();
    let grid = grid_for(&all);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (spec, is_train) in specs {
        let example = StateExample {
            records: cv_records(&spec, &phases, cfg.encoding, &grid)?,
            meta: StateMeta { family: spec.family().name().into(), group: 0.0, cv: Some(spec) },
        };
        if is_train { train.push(example) } else { test.push(example) }
    }
    let mut families: Vec<String> = all.iter().map(|s| s.family().name().to_string()).collect();
    families.sort();
    families.dedup();
    let header = |split: &str| DatasetHeader {
        kind: DatasetKind::Cv,
        families: families.clone(),
        n_qubits: None,
        mode: None,
        m_dim: cfg.encoding.dim(),
        k: crate::cv::N_BINS,
        n_measurements: phases.len(),
        seed: cfg.seed,
        split: split.into(),
        settings: Vec::new(),
        phases: phases.clone(),
        encoding: Some(cfg.encoding),
    };
    Ok((Dataset { header: header("train"), states: train }, Dataset { header: header("test"), states: test }))
}
