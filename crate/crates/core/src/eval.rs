//! Classical-fidelity evaluation and the online learning driver.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::cv::{add_probability_noise, jitter_phase};
use crate::data::{Dataset, DatasetKind, MeasurementRecord, StateExample};
use crate::error::{Error, Result};
use crate::gen::grid_for;
use crate::model::Gqnq;
use crate::numeric::ExactVecSum;
use crate::parallel::par_map;
use crate::spin::sample_shots;
use crate::training::stream_rng;

/// Bhattacharyya coefficient `Σ √(p_j q_j)`.
pub fn classical_fidelity(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape("classical_fidelity", &[p.len()], &[q.len()]));
    }
    let f: f64 = p.iter().zip(q).map(|(a, b)| (a.max(0.0) * b.max(0.0)).sqrt()).sum();
    Ok(f.min(1.0))
}

/// How the context statistics are corrupted before they reach the network.
/// Fidelities are always scored against the noiseless distributions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseCondition {
    #[default]
    None,
    /// Empirical frequencies of this many shots.
    Shots { n: usize },
    /// Additive Gaussian noise on every bin.
    Probability { sigma: f64 },
    /// The quadrature actually measured is rotated by a Gaussian angle while
    /// the network is told the nominal phase.
    PhaseJitter { sigma: f64 },
}

impl NoiseCondition {
    pub fn label(&self) -> String {
        match self {
            NoiseCondition::None => "none".into(),
            NoiseCondition::Shots { n } => format!("shots={n}"),
            NoiseCondition::Probability { sigma } => format!("noise_sigma={sigma}"),
            NoiseCondition::PhaseJitter { sigma } => format!("phase_jitter_sigma={sigma}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Context size `s`.
    pub context_size: usize,
    pub noise: NoiseCondition,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateFidelity {
    pub index: usize,
    pub family: String,
    pub group: f64,
    pub mean: f64,
    pub worst: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub family: String,
    pub group: f64,
    pub states: usize,
    pub mean: f64,
    pub worst: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub noise: String,
    pub context_size: usize,
    pub states: Vec<StateFidelity>,
}

impl FidelityReport {
    /// Mean over states of the per-state average fidelity.
    pub fn average(&self) -> f64 {
        mean(self.states.iter().map(|s| s.mean))
    }

    /// Mean over states of the per-state worst-case fidelity.
    pub fn worst_average(&self) -> f64 {
        mean(self.states.iter().map(|s| s.worst))
    }

    /// Per `(family, group)` averages, plus one row per family with group NaN.
    pub fn groups(&self) -> Vec<GroupSummary> {
        let mut by: BTreeMap<(String, i64), Vec<&StateFidelity>> = BTreeMap::new();
        let mut fam: BTreeMap<String, Vec<&StateFidelity>> = BTreeMap::new();
        for s in &self.states {
            by.entry((s.family.clone(), (s.group * 1e6).round() as i64)).or_default().push(s);
            fam.entry(s.family.clone()).or_default().push(s);
        }
        let summary = |family: String, group: f64, v: &[&StateFidelity]| GroupSummary {
            family,
            group,
            states: v.len(),
            mean: mean(v.iter().map(|s| s.mean)),
            worst: mean(v.iter().map(|s| s.worst)),
        };
        let mut out: Vec<GroupSummary> =
            by.iter().map(|((f, g), v)| summary(f.clone(), *g as f64 / 1e6, v)).collect();
        out.extend(fam.iter().map(|(f, v)| summary(f.clone(), f64::NAN, v)));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,family,group,noise,context_size,mean_fidelity,worst_fidelity\n");
        for r in &self.states {
            writeln!(s, "{},{},{},{},{},{:.10},{:.10}", r.index, r.family, r.group, self.noise, self.context_size, r.mean, r.worst)
                .unwrap();
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("noise: {}   context size: {}\n", self.noise, self.context_size);
        writeln!(s, "{:<20} {:>8} {:>7} {:>10} {:>10}", "family", "group", "states", "average", "worst").unwrap();
        for g in self.groups() {
            let group = if g.group.is_nan() { "all".to_string() } else { format!("{:.2}", g.group) };
            writeln!(s, "{:<20} {:>8} {:>7} {:>10.4} {:>10.4}", g.family, group, g.states, g.mean, g.worst).unwrap();
        }
        writeln!(s, "{:<20} {:>8} {:>7} {:>10.4} {:>10.4}", "total", "", self.states.len(), self.average(), self.worst_average())
            .unwrap();
        s
    }
}

fn mean<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let (mut n, mut t) = (0usize, 0.0);
    for x in xs {
        n += 1;
        t += x;
    }
    if n == 0 {
        f64::NAN
    } else {
        t / n as f64
    }
}

/// Context records with `noise` applied to their statistics.
pub fn corrupt_context(
    dataset: &Dataset,
    state: &StateExample,
    indices: &[usize],
    noise: NoiseCondition,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<MeasurementRecord>> {
    let clean = || indices.iter().map(|&i| state.records[i].clone());
    Ok(match noise {
        NoiseCondition::None => clean().collect(),
        NoiseCondition::Shots { n } => clean()
            .map(|r| Ok(MeasurementRecord::new(r.m, sample_shots(&r.p, n, rng)?)))
            .collect::<Result<_>>()?,
        NoiseCondition::Probability { sigma } => clean()
            .map(|r| Ok(MeasurementRecord::new(r.m, add_probability_noise(&r.p, sigma, rng)?)))
            .collect::<Result<_>>()?,
        NoiseCondition::PhaseJitter { sigma } => {
            let spec = state
                .meta
                .cv
                .ok_or_else(|| Error::Contract("phase jitter needs continuous-variable states".into()))?;
            if dataset.header.kind != DatasetKind::Cv || dataset.header.phases.len() != state.records.len() {
                return Err(Error::Contract("phase jitter needs the phases of every measurement".into()));
            }
            let fock = spec.build()?;
            let grid = grid_for(&[spec]);
            indices
                .iter()
                .map(|&i| {
                    let actual = jitter_phase(dataset.header.phases[i], sigma, rng)?;
                    Ok(MeasurementRecord::new(state.records[i].m.clone(), grid.distribution(&fock, actual)?))
                })
                .collect::<Result<_>>()?
        }
    })
}

/// Average and worst fidelity of deterministic predictions for `queries`.
pub fn score_queries(model: &Gqnq, r: &[f64], queries: &[&MeasurementRecord]) -> Result<(f64, f64)> {
    if queries.is_empty() {
        return Err(Error::Contract("no query measurements left to score".into()));
    }
    let ms: Vec<&[f64]> = queries.iter().map(|q| q.m.as_slice()).collect();
    let preds = model.predict_queries(r, &ms)?;
    let mut total = 0.0;
    let mut worst = f64::INFINITY;
    for (p, q) in preds.iter().zip(queries) {
        let f = classical_fidelity(p, &q.p)?;
        total += f;
        worst = worst.min(f);
    }
    Ok((total / queries.len() as f64, worst))
}

/// For each test state: a random context of `s` measurements, deterministic
/// predictions for all others, and their mean and worst fidelity.
pub fn evaluate(model: &Gqnq, dataset: &Dataset, cfg: &EvalConfig) -> Result<FidelityReport> {
    let states = par_map(dataset.states.len(), |index| {
        let state = &dataset.states[index];
        let n = state.records.len();
        if cfg.context_size == 0 || cfg.context_size >= n {
            return Err(Error::Contract(format!("context size {} for {n} measurements", cfg.context_size)));
        }
        let mut rng = stream_rng(cfg.seed, index as u64);
        let picked = sample(&mut rng, n, cfg.context_size).into_vec();
        let context = corrupt_context(dataset, state, &picked, cfg.noise, &mut rng)?;
        let r = model.context_representation(&context)?;
        let mut in_context = vec![false; n];
        picked.iter().for_each(|&i| in_context[i] = true);
        let queries: Vec<&MeasurementRecord> =
            state.records.iter().enumerate().filter(|(i, _)| !in_context[*i]).map(|(_, r)| r).collect();
        let (mean, worst) = score_queries(model, &r, &queries)?;
        Ok(StateFidelity { index, family: state.meta.family.clone(), group: state.meta.group, mean, worst })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(FidelityReport { noise: cfg.noise.label(), context_size: cfg.context_size, states })
}

/// Representation of every state from a clean random context of
/// `context_size` records, drawn exactly as [`evaluate`] draws it.
pub fn representations(model: &Gqnq, dataset: &Dataset, context_size: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    par_map(dataset.states.len(), |index| {
        let records = &dataset.states[index].records;
        let n = records.len();
        if context_size == 0 || context_size > n {
            return Err(Error::Contract(format!("context size {context_size} for {n} measurements")));
        }
        let picked = sample(&mut stream_rng(seed, index as u64), n, context_size).into_vec();
        let context: Vec<MeasurementRecord> = picked.iter().map(|&i| records[i].clone()).collect();
        model.context_representation(&context)
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineStep {
    pub step: usize,
    /// Index of the measurement revealed at this step.
    pub measurement: usize,
    pub representation: Vec<f64>,
    pub mean: f64,
    pub worst: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineTrace {
    pub steps: Vec<OnlineStep>,
}

/// Reveals the records of `order` one at a time. After step `i` the
/// representation is the mean of the first `i` record representations, kept
/// as an exact running sum, and every unrevealed measurement is predicted.
pub fn online_run(model: &Gqnq, records: &[MeasurementRecord], order: &[usize]) -> Result<OnlineTrace> {
    if order.is_empty() || order.len() >= records.len() {
        return Err(Error::Contract("online run needs between 1 and |M| − 1 steps".into()));
    }
    let mut acc = ExactVecSum::new(model.hyper.d_r);
    let mut revealed = vec![false; records.len()];
    let mut steps = Vec::with_capacity(order.len());
    for (i, &j) in order.iter().enumerate() {
        let rec = records.get(j).ok_or_else(|| Error::Contract(format!("measurement {j} out of range")))?;
        if revealed[j] {
            return Err(Error::Contract(format!("measurement {j} revealed twice")));
        }
        revealed[j] = true;
        acc.add(&model.rep_forward(&rec.m, &rec.p)?);
        let r = acc.mean();
        let queries: Vec<&MeasurementRecord> =
            records.iter().enumerate().filter(|(k, _)| !revealed[*k]).map(|(_, r)| r).collect();
        let (mean, worst) = score_queries(model, &r, &queries)?;
        steps.push(OnlineStep { step: i + 1, measurement: j, representation: r, mean, worst });
    }
    Ok(OnlineTrace { steps })
}

/// Online runs over every state of `dataset` with `steps` random reveals
/// each; returns the traces and the per-step mean of `(mean, worst)`.
pub fn online_dataset(model: &Gqnq, dataset: &Dataset, steps: usize, seed: u64) -> Result<(Vec<OnlineTrace>, Vec<(f64, f64)>)> {
    let traces = par_map(dataset.states.len(), |i| {
        let state = &dataset.states[i];
        let n = state.records.len();
        if steps == 0 || steps >= n {
            return Err(Error::Contract(format!("{steps} online steps for {n} measurements")));
        }
        let order = sample(&mut stream_rng(seed, i as u64), n, steps).into_vec();
        online_run(model, &state.records, &order)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let curve = (0..steps)
        .map(|s| (mean(traces.iter().map(|t| t.steps[s].mean)), mean(traces.iter().map(|t| t.steps[s].worst))))
        .collect();
    Ok((traces, curve))
}

pub fn online_csv(curve: &[(f64, f64)]) -> String {
    let mut s = String::from("step,mean_fidelity,worst_fidelity\n");
    for (i, (m, w)) in curve.iter().enumerate() {
        writeln!(s, "{},{:.10},{:.10}", i + 1, m, w).unwrap();
    }
    s
}
