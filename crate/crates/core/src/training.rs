//! Multi-state training over a dataset, single-state training on the records
//! of one state, the learning-rate schedule and checkpoints.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ad::{AdamState, Tensor};
use crate::data::{MeasurementRecord, StateExample};
use crate::error::{Error, Result};
use crate::model::{Gqnq, HyperParams};
use crate::parallel::par_map;

pub const CHECKPOINT_MAGIC: &str = "GQNQCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Epochs the divergence guard tolerates above ten times the first loss.
const DIVERGENCE_PATIENCE: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Total epochs `E`; resuming continues up to this count.
    pub epochs: usize,
    /// States per optimizer step `B`.
    pub batch_size: usize,
    /// Largest context size `a`.
    pub max_context: usize,
    /// Initial learning rate `δ₀`.
    pub learning_rate: f64,
    /// Epochs per halving of the learning rate.
    pub lr_half_life: f64,
    pub seed: u64,
    /// Upper bound on the query records scored per state, chosen at random.
    pub max_queries: Option<usize>,
    /// Relative appearance frequency per family; families left out weigh 1.
    /// Empty means every state appears exactly once per epoch.
    pub family_weights: BTreeMap<String, f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 20,
            max_context: 30,
            learning_rate: 0.01,
            lr_half_life: 50.0,
            seed: 0,
            max_queries: None,
            family_weights: BTreeMap::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.max_context == 0 {
            return Err(Error::InvalidParameter("epochs, batch size and context size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.lr_half_life > 0.0) {
            return Err(Error::InvalidParameter(format!("learning-rate half-life {}", self.lr_half_life)));
        }
        if self.max_queries == Some(0) {
            return Err(Error::InvalidParameter("query cap must be positive".into()));
        }
        if self.family_weights.values().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("family weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `δ₀ · 0.5^(epoch / half_life)`.
pub fn lr_schedule(epoch: usize, lr0: f64, half_life: f64) -> f64 {
    lr0 * 0.5f64.powf(epoch as f64 / half_life)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Multi,
    Single,
}

/// Everything needed to continue training bit-identically.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Gqnq,
    pub optimizer: AdamState,
    pub config: TrainConfig,
    pub mode: TrainMode,
    /// Completed epochs.
    pub epoch: usize,
    /// Mean training loss of each completed epoch.
    pub loss_history: Vec<f64>,
}

impl Checkpoint {
    /// Fresh model seeded from `config.seed`.
    pub fn init(hyper: HyperParams, config: TrainConfig, mode: TrainMode) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(config.seed, u64::MAX);
        let model = Gqnq::new(hyper, &mut rng)?;
        let optimizer = AdamState::new(&model.params);
        Ok(Self { model, optimizer, config, mode, epoch: 0, loss_history: Vec::new() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(std::fs::File::open(path)?))
    }

    /// Loads a checkpoint to continue training a model with `hyper`.
    pub fn load_for_resume(path: &Path, hyper: &HyperParams) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if &ckpt.model.hyper != hyper {
            return Err(Error::Dimension(format!(
                "checkpoint model {:?} does not match requested {hyper:?}",
                ckpt.model.hyper
            )));
        }
        Ok(ckpt)
    }

    /// Text magic line, one JSON header line, then every parameter, first
    /// moment and second moment as little-endian `f64` in parameter order.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let header = CheckpointHeader {
            hyper: self.model.hyper.clone(),
            config: self.config.clone(),
            mode: self.mode,
            epoch: self.epoch,
            adam_t: self.optimizer.t,
            adam_beta1: self.optimizer.beta1,
            adam_beta2: self.optimizer.beta2,
            adam_eps: self.optimizer.eps,
            loss_history: self.loss_history.clone(),
        };
        writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
        serde_json::to_writer(&mut *out, &header)?;
        writeln!(out)?;
        for group in [&self.model.params, &self.optimizer.m, &self.optimizer.v] {
            for t in group {
                for v in t.data() {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: &mut R) -> Result<Self> {
        let mut line = String::new();
        input.read_line(&mut line)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(CHECKPOINT_MAGIC) {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format("checkpoint version missing".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version { found: version.to_string(), expected: CHECKPOINT_VERSION });
        }
        line.clear();
        input.read_line(&mut line)?;
        let header: CheckpointHeader = serde_json::from_str(line.trim_end())?;
        header.hyper.validate()?;
        let shapes = header.hyper.param_shapes();
        let mut groups = Vec::new();
        for _ in 0..3 {
            let mut tensors = Vec::with_capacity(shapes.len());
            for s in &shapes {
                let n: usize = s.iter().product();
                let mut bytes = vec![0u8; 8 * n];
                input
                    .read_exact(&mut bytes)
                    .map_err(|_| Error::Format("checkpoint payload is truncated".into()))?;
                let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                tensors.push(Tensor::new(s.clone(), data)?);
            }
            groups.push(tensors);
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint payload".into()));
        }
        let v = groups.pop().unwrap();
        let m = groups.pop().unwrap();
        let params = groups.pop().unwrap();
        Ok(Self {
            model: Gqnq::from_params(header.hyper, params)?,
            optimizer: AdamState {
                t: header.adam_t,
                m,
                v,
                beta1: header.adam_beta1,
                beta2: header.adam_beta2,
                eps: header.adam_eps,
            },
            config: header.config,
            mode: header.mode,
            epoch: header.epoch,
            loss_history: header.loss_history,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    hyper: HyperParams,
    config: TrainConfig,
    mode: TrainMode,
    epoch: usize,
    adam_t: u64,
    adam_beta1: f64,
    adam_beta2: f64,
    adam_eps: f64,
    loss_history: Vec<f64>,
}

/// Independent generator for one `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn epoch_stream(epoch: usize, position: usize) -> u64 {
    ((epoch as u64) << 32) | position as u64
}

/// Random context/query split of one state's records: `n₁ ~ U[1, a]` context
/// records, the rest (optionally capped) as queries.
pub fn split_records<R: Rng + ?Sized>(
    records: &[MeasurementRecord],
    max_context: usize,
    max_queries: Option<usize>,
    rng: &mut R,
) -> Result<(Vec<MeasurementRecord>, Vec<MeasurementRecord>)> {
    if max_context >= records.len() {
        return Err(Error::Contract(format!(
            "context size {max_context} must be below the {} records of a state",
            records.len()
        )));
    }
    let n1 = rng.random_range(1..=max_context);
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(rng);
    let context = idx[..n1].iter().map(|&i| records[i].clone()).collect();
    let mut rest = &idx[n1..];
    if let Some(cap) = max_queries {
        rest = &rest[..rest.len().min(cap)];
    }
    Ok((context, rest.iter().map(|&i| records[i].clone()).collect()))
}

/// Progress notification after every epoch.
pub trait Observer {
    fn epoch_done(&mut self, _epoch: usize, _loss: f64) {}
}

impl Observer for () {}

impl<F: FnMut(usize, f64)> Observer for F {
    fn epoch_done(&mut self, epoch: usize, loss: f64) {
        self(epoch, loss)
    }
}

/// Order in which states are visited during `epoch`.
pub fn epoch_order(dataset: &[StateExample], config: &TrainConfig, epoch: usize) -> Vec<usize> {
    let mut rng = stream_rng(config.seed, epoch_stream(epoch, u32::MAX as usize));
    let n = dataset.len();
    if config.family_weights.is_empty() {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        return order;
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in dataset {
        *counts.entry(s.meta.family.as_str()).or_default() += 1;
    }
    let weights: Vec<f64> = dataset
        .iter()
        .map(|s| {
            let f = s.meta.family.as_str();
            config.family_weights.get(f).copied().unwrap_or(1.0) / counts[f] as f64
        })
        .collect();
    match WeightedIndex::new(&weights) {
        Ok(dist) => (0..n).map(|_| dist.sample(&mut rng)).collect(),
        Err(_) => Vec::new(),
    }
}

fn check_dataset(dataset: &[StateExample], hyper: &HyperParams, max_context: usize) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    for s in dataset {
        let (m, k) = s.dims()?;
        if (m, k) != (hyper.m_dim, hyper.k) {
            return Err(Error::shape("training record", &[m, k], &[hyper.m_dim, hyper.k]));
        }
        if s.records.len() <= max_context {
            return Err(Error::Contract(format!(
                "a state has {} records; more than the context size {max_context} are needed",
                s.records.len()
            )));
        }
    }
    Ok(())
}

struct Accumulator {
    grads: Option<Vec<Tensor>>,
    count: usize,
}

impl Accumulator {
    fn new() -> Self {
        Self { grads: None, count: 0 }
    }

    fn add(&mut self, g: Vec<Tensor>) {
        match &mut self.grads {
            None => self.grads = Some(g),
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b)),
        }
        self.count += 1;
    }

    /// Mean gradient since the last flush.
    fn take(&mut self) -> Option<Vec<Tensor>> {
        let mut g = self.grads.take()?;
        let scale = 1.0 / self.count as f64;
        g.iter_mut().for_each(|t| t.scale_assign(scale));
        self.count = 0;
        Some(g)
    }
}

/// Loss and summed gradient over `states`, given as `(position, state)`
/// pairs, each split as it would be at that position of `epoch`.
pub fn batch_gradient(
    model: &Gqnq,
    dataset: &[StateExample],
    states: &[(usize, usize)],
    config: &TrainConfig,
    epoch: usize,
) -> Result<(f64, Vec<Tensor>)> {
    let mut acc = Accumulator::new();
    let mut loss = 0.0;
    let results = par_map(states.len(), |i| {
        let (pos, s) = states[i];
        state_gradient(model, &dataset[s].records, config, epoch, pos)
    });
    for r in results {
        let (l, g) = r?;
        loss += l;
        acc.add(g);
    }
    let g = acc.grads.ok_or_else(|| Error::Contract("empty batch".into()))?;
    Ok((loss, g))
}

/// Loss and gradient of one state at `position` of `epoch`.
pub fn state_gradient(
    model: &Gqnq,
    records: &[MeasurementRecord],
    config: &TrainConfig,
    epoch: usize,
    position: usize,
) -> Result<(f64, Vec<Tensor>)> {
    let mut rng = stream_rng(config.seed, epoch_stream(epoch, position));
    let (context, queries) = split_records(records, config.max_context, config.max_queries, &mut rng)?;
    model.loss_and_grads(&context, &queries, &mut rng)
}

struct Guard {
    initial: Option<f64>,
    above: usize,
}

impl Guard {
    fn check(&mut self, epoch: usize, loss: f64) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("training diverged: loss {loss} at epoch {epoch}")));
        }
        let first = *self.initial.get_or_insert(loss);
        if loss > 10.0 * first.abs().max(1e-12) {
            self.above += 1;
            if self.above >= DIVERGENCE_PATIENCE {
                return Err(Error::Numeric(format!(
                    "training diverged: loss {loss:.4e} stayed above ten times the initial {first:.4e} for {DIVERGENCE_PATIENCE} epochs (epoch {epoch})"
                )));
            }
        } else {
            self.above = 0;
        }
        Ok(())
    }
}

/// Multi-state training: each visited state contributes the loss of a fresh
/// random split, and every `B` states (and at the end of an epoch) the mean
/// gradient takes one Adam step. Continues `ckpt` until `ckpt.config.epochs`.
pub fn train_multi(dataset: &[StateExample], mut ckpt: Checkpoint, observer: &mut dyn Observer) -> Result<Checkpoint> {
    let config = ckpt.config.clone();
    config.validate()?;
    check_dataset(dataset, &ckpt.model.hyper, config.max_context)?;
    let mut guard = Guard { initial: ckpt.loss_history.first().copied(), above: 0 };
    while ckpt.epoch < config.epochs {
        let epoch = ckpt.epoch;
        let lr = lr_schedule(epoch, config.learning_rate, config.lr_half_life);
        let order = epoch_order(dataset, &config, epoch);
        let mut acc = Accumulator::new();
        let mut total = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let start = b * config.batch_size;
            let model = &ckpt.model;
            let results = par_map(batch.len(), |i| {
                state_gradient(model, &dataset[batch[i]].records, &config, epoch, start + i)
            });
            for r in results {
                let (l, g) = r?;
                total += l;
                acc.add(g);
            }
            let g = acc.take().expect("nonempty batch");
            ckpt.optimizer.step(&mut ckpt.model.params, &g, lr)?;
        }
        let loss = total / order.len().max(1) as f64;
        guard.check(epoch, loss)?;
        ckpt.loss_history.push(loss);
        ckpt.epoch += 1;
        observer.epoch_done(epoch, loss);
    }
    Ok(ckpt)
}

/// Single-state training on the `s` records of one state: one random split
/// and one Adam step per epoch.
pub fn train_single(records: &[MeasurementRecord], mut ckpt: Checkpoint, observer: &mut dyn Observer) -> Result<Checkpoint> {
    let config = ckpt.config.clone();
    config.validate()?;
    let state = StateExample { records: records.to_vec(), meta: Default::default() };
    check_dataset(std::slice::from_ref(&state), &ckpt.model.hyper, config.max_context)?;
    let mut guard = Guard { initial: ckpt.loss_history.first().copied(), above: 0 };
    while ckpt.epoch < config.epochs {
        let epoch = ckpt.epoch;
        let lr = lr_schedule(epoch, config.learning_rate, config.lr_half_life);
        let (loss, g) = state_gradient(&ckpt.model, records, &config, epoch, 0)?;
        ckpt.optimizer.step(&mut ckpt.model.params, &g, lr)?;
        guard.check(epoch, loss)?;
        ckpt.loss_history.push(loss);
        ckpt.epoch += 1;
        observer.epoch_done(epoch, loss);
    }
    Ok(ckpt)
}
