//! The generative query network: a representation network averaged over the
//! context, and a recurrent latent-variable generation network predicting a
//! diagonal Gaussian over the outcome probabilities of a query measurement.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::ad::{
    dense, gaussian_kl, gaussian_log_density, gaussian_sample, kl_divergence, log_density, lstm_cell,
    Activation, DiagonalGaussian, GaussianVar, LstmVars, Tape, Tensor, Var,
};
use crate::data::MeasurementRecord;
use crate::error::{Error, Result};
use crate::numeric::ExactVecSum;

/// Default lower bound on every predicted standard deviation.
pub const DEFAULT_STD_FLOOR: f64 = 1e-3;
/// Initial predicted standard deviation.
const INIT_STD: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// `len(m)`.
    pub m_dim: usize,
    /// Outcome count `k`.
    pub k: usize,
    pub d_r: usize,
    pub d_h: usize,
    pub d_z: usize,
    pub l_steps: usize,
    /// Hidden widths of the representation network; its output layer has width `d_r`.
    pub rep_hidden: Vec<usize>,
    /// Lower bound on the predicted per-bin standard deviation.
    #[serde(default = "default_std_floor")]
    pub std_floor: f64,
}

fn default_std_floor() -> f64 {
    DEFAULT_STD_FLOOR
}

impl HyperParams {
    /// `d_h = 3 d_r`, `d_z = d_r`, 8 generation steps, hidden widths (128, 128).
    pub fn new(m_dim: usize, k: usize, d_r: usize) -> Self {
        Self {
            m_dim,
            k,
            d_r,
            d_h: 3 * d_r,
            d_z: d_r,
            l_steps: 8,
            rep_hidden: vec![128, 128],
            std_floor: DEFAULT_STD_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.m_dim, self.k, self.d_r, self.d_h, self.d_z, self.l_steps];
        if dims.contains(&0) || self.rep_hidden.contains(&0) {
            return Err(Error::InvalidParameter(format!("every network dimension must be positive: {self:?}")));
        }
        if !(self.std_floor > 0.0 && self.std_floor < INIT_STD) {
            return Err(Error::InvalidParameter(format!("std floor {} must lie in (0, {INIT_STD})", self.std_floor)));
        }
        Ok(())
    }

    fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut width = self.m_dim + self.k;
        for (i, &h) in self.rep_hidden.iter().chain(std::iter::once(&self.d_r)).enumerate() {
            out.push((format!("rep{i}.w"), vec![h, width]));
            out.push((format!("rep{i}.b"), vec![h]));
            width = h;
        }
        let (m, r, z, h, k) = (self.m_dim, self.d_r, self.d_z, self.d_h, self.k);
        out.push(("gen_lstm.w".into(), vec![4 * h, m + r + z + h]));
        out.push(("gen_lstm.b".into(), vec![4 * h]));
        out.push(("post_lstm.w".into(), vec![4 * h, m + r + k + h + h]));
        out.push(("post_lstm.b".into(), vec![4 * h]));
        out.push(("prior_head.w".into(), vec![2 * z, h]));
        out.push(("prior_head.b".into(), vec![2 * z]));
        out.push(("post_head.w".into(), vec![2 * z, h]));
        out.push(("post_head.b".into(), vec![2 * z]));
        out.push(("canvas.w".into(), vec![h, h]));
        out.push(("out_head.w".into(), vec![2 * k, h]));
        out.push(("out_head.b".into(), vec![2 * k]));
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        self.shapes().into_iter().map(|(n, _)| n).collect()
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.shapes().into_iter().map(|(_, s)| s).collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }
}

/// Positions of each tensor in the flat parameter list.
#[derive(Clone, Copy, Debug)]
struct Layout {
    rep_layers: usize,
}

impl Layout {
    fn of(h: &HyperParams) -> Self {
        Self { rep_layers: h.rep_hidden.len() + 1 }
    }
    fn rep(&self, i: usize) -> (usize, usize) {
        (2 * i, 2 * i + 1)
    }
    fn base(&self) -> usize {
        2 * self.rep_layers
    }
    fn gen_lstm(&self) -> (usize, usize) {
        (self.base(), self.base() + 1)
    }
    fn post_lstm(&self) -> (usize, usize) {
        (self.base() + 2, self.base() + 3)
    }
    fn prior_head(&self) -> (usize, usize) {
        (self.base() + 4, self.base() + 5)
    }
    fn post_head(&self) -> (usize, usize) {
        (self.base() + 6, self.base() + 7)
    }
    fn canvas(&self) -> usize {
        self.base() + 8
    }
    fn out_head(&self) -> (usize, usize) {
        (self.base() + 9, self.base() + 10)
    }
}

/// How the latent `z_i` is chosen when only the prior stream runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentMode {
    /// Prior means; predictions are a pure function of the inputs.
    Deterministic,
    Sample,
}

/// Per-step prior and posterior for every query row.
#[derive(Clone, Debug)]
pub struct StepTrace {
    pub prior: Vec<DiagonalGaussian>,
    pub posterior: Vec<DiagonalGaussian>,
}

/// Trainable network with its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gqnq {
    pub hyper: HyperParams,
    pub params: Vec<Tensor>,
}

struct Vars(Vec<Var>);

impl Gqnq {
    /// Glorot-uniform weights, zero biases; the output head starts at a
    /// uniform mean `1/k` with standard deviation 0.05.
    pub fn new<R: Rng + ?Sized>(hyper: HyperParams, rng: &mut R) -> Result<Self> {
        hyper.validate()?;
        let names = hyper.param_names();
        let mut params = Vec::new();
        for (name, shape) in names.iter().zip(hyper.param_shapes()) {
            let t = if shape.len() == 2 {
                let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                let u = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                Tensor::new(shape.clone(), (0..shape[0] * shape[1]).map(|_| u.sample(rng)).collect())?
            } else if name == "out_head.b" {
                let k = hyper.k;
                let raw_std = raw_std_for(INIT_STD, hyper.std_floor);
                let mut b = vec![1.0 / k as f64; k];
                b.extend(std::iter::repeat_n(raw_std, k));
                Tensor::vector(b)
            } else {
                Tensor::zeros(&shape)
            };
            params.push(t);
        }
        Ok(Self { hyper, params })
    }

    /// Wraps existing tensors after checking them against `hyper`.
    pub fn from_params(hyper: HyperParams, params: Vec<Tensor>) -> Result<Self> {
        hyper.validate()?;
        let shapes = hyper.param_shapes();
        if shapes.len() != params.len() {
            return Err(Error::Dimension(format!("{} tensors for {} parameters", params.len(), shapes.len())));
        }
        for (s, p) in shapes.iter().zip(&params) {
            if s.as_slice() != p.shape() {
                return Err(Error::shape("from_params", s, p.shape()));
            }
        }
        Ok(Self { hyper, params })
    }

    fn layout(&self) -> Layout {
        Layout::of(&self.hyper)
    }

    fn check_record(&self, m: &[f64], p: Option<&[f64]>) -> Result<()> {
        if m.len() != self.hyper.m_dim {
            return Err(Error::shape("measurement", &[m.len()], &[self.hyper.m_dim]));
        }
        if let Some(p) = p {
            if p.len() != self.hyper.k {
                return Err(Error::shape("outcomes", &[p.len()], &[self.hyper.k]));
            }
        }
        Ok(())
    }

    /// `r_i = f(m_i, p_i)`, tanh hidden layers and a linear output.
    ///
    /// Evaluated row by row with plain loops so that the result for one record
    /// never depends on what else is evaluated with it.
    pub fn rep_forward(&self, m: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        self.check_record(m, Some(p))?;
        let lay = self.layout();
        let mut x: Vec<f64> = m.iter().chain(p).copied().collect();
        for i in 0..lay.rep_layers {
            let (wi, bi) = lay.rep(i);
            let (w, b) = (&self.params[wi], &self.params[bi]);
            let (out, inp) = (w.shape()[0], w.shape()[1]);
            let last = i + 1 == lay.rep_layers;
            x = (0..out)
                .map(|o| {
                    let row = &w.data()[o * inp..(o + 1) * inp];
                    let pre = b.data()[o] + row.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>();
                    if last {
                        pre
                    } else {
                        pre.tanh()
                    }
                })
                .collect();
        }
        Ok(x)
    }

    pub fn represent(&self, records: &[MeasurementRecord]) -> Result<Vec<Vec<f64>>> {
        records.iter().map(|r| self.rep_forward(&r.m, &r.p)).collect()
    }

    /// Representation of a context: the mean of the per-record vectors.
    pub fn context_representation(&self, records: &[MeasurementRecord]) -> Result<Vec<f64>> {
        aggregate(&self.represent(records)?)
    }

    fn leaves(&self, tape: &mut Tape) -> Vars {
        Vars(self.params.iter().map(|p| tape.leaf(p.clone())).collect())
    }

    fn rep_graph(&self, tape: &mut Tape, v: &Vars, context: &[MeasurementRecord]) -> Result<Var> {
        let lay = self.layout();
        let cols = self.hyper.m_dim + self.hyper.k;
        let mut data = Vec::with_capacity(context.len() * cols);
        for r in context {
            self.check_record(&r.m, Some(&r.p))?;
            data.extend_from_slice(&r.m);
            data.extend_from_slice(&r.p);
        }
        let mut x = tape.leaf(Tensor::new(vec![context.len(), cols], data)?);
        for i in 0..lay.rep_layers {
            let (wi, bi) = lay.rep(i);
            let act = if i + 1 == lay.rep_layers { Activation::Identity } else { Activation::Tanh };
            x = dense(tape, v.0[wi], v.0[bi], x, act)?;
        }
        tape.mean_rows(x)
    }

    fn split_gaussian(tape: &mut Tape, raw: Var, d: usize) -> Result<GaussianVar> {
        Ok(GaussianVar { mean: tape.slice(raw, 0, d)?, log_std: tape.slice(raw, d, d)? })
    }

    /// Output head: mean and a softplus standard deviation floored at `std_floor`.
    fn output_graph(&self, tape: &mut Tape, v: &Vars, u: Var) -> Result<GaussianVar> {
        let (w, b) = self.layout().out_head();
        let raw = dense(tape, v.0[w], v.0[b], u, Activation::Identity)?;
        let k = self.hyper.k;
        let mean = tape.slice(raw, 0, k)?;
        let pre = tape.slice(raw, k, k)?;
        let sp = tape.softplus(pre);
        let std = tape.add_scalar(sp, self.hyper.std_floor);
        Ok(GaussianVar { mean, log_std: tape.log(std)? })
    }

    fn queries_leaf(&self, tape: &mut Tape, queries: &[&[f64]]) -> Result<Var> {
        let mut data = Vec::with_capacity(queries.len() * self.hyper.m_dim);
        for q in queries {
            self.check_record(q, None)?;
            data.extend_from_slice(q);
        }
        Ok(tape.leaf(Tensor::new(vec![queries.len(), self.hyper.m_dim], data)?))
    }

    /// Prior-only generation for every query row; `noise[i]` feeds step `i`
    /// when sampling.
    fn prior_graph(
        &self,
        tape: &mut Tape,
        v: &Vars,
        r: Var,
        mq: Var,
        noise: Option<&[Tensor]>,
    ) -> Result<GaussianVar> {
        let lay = self.layout();
        let (q, h) = (tape.value(mq).rows(), self.hyper.d_h);
        let mut h1 = tape.leaf(Tensor::zeros(&[q, h]));
        let mut c1 = h1;
        let mut u = h1;
        let (gw, gb) = lay.gen_lstm();
        let (pw, pb) = lay.prior_head();
        for i in 0..self.hyper.l_steps {
            let raw = dense(tape, v.0[pw], v.0[pb], h1, Activation::Identity)?;
            let prior = Self::split_gaussian(tape, raw, self.hyper.d_z)?;
            let z = match noise {
                Some(n) => {
                    let e = tape.leaf(n[i].clone());
                    gaussian_sample(tape, prior, e)?
                }
                None => prior.mean,
            };
            let input = tape.concat(&[mq, r, z])?;
            (h1, c1) = lstm_cell(tape, LstmVars { w: v.0[gw], b: v.0[gb] }, input, h1, c1)?;
            let du = tape.linear(h1, v.0[lay.canvas()], None)?;
            u = tape.add(u, du)?;
        }
        self.output_graph(tape, v, u)
    }

    /// Training-time generation: the posterior stream sees the true outcomes
    /// and supplies `z_i` to the generation stream. Returns the output head
    /// and the per-step `(prior, posterior)` pairs.
    fn posterior_graph(
        &self,
        tape: &mut Tape,
        v: &Vars,
        r: Var,
        mq: Var,
        pq: Var,
        noise: &[Tensor],
    ) -> Result<(GaussianVar, Vec<(GaussianVar, GaussianVar)>)> {
        let lay = self.layout();
        let (q, h) = (tape.value(mq).rows(), self.hyper.d_h);
        let zeros = tape.leaf(Tensor::zeros(&[q, h]));
        let (mut h1, mut c1, mut h2, mut c2, mut u) = (zeros, zeros, zeros, zeros, zeros);
        let (gw, gb) = lay.gen_lstm();
        let (sw, sb) = lay.post_lstm();
        let (pw, pb) = lay.prior_head();
        let (qw, qb) = lay.post_head();
        let mut steps = Vec::with_capacity(self.hyper.l_steps);
        for e in noise.iter().take(self.hyper.l_steps) {
            let raw = dense(tape, v.0[pw], v.0[pb], h1, Activation::Identity)?;
            let prior = Self::split_gaussian(tape, raw, self.hyper.d_z)?;
            let post_in = tape.concat(&[mq, r, pq, h1])?;
            (h2, c2) = lstm_cell(tape, LstmVars { w: v.0[sw], b: v.0[sb] }, post_in, h2, c2)?;
            let raw = dense(tape, v.0[qw], v.0[qb], h2, Activation::Identity)?;
            let post = Self::split_gaussian(tape, raw, self.hyper.d_z)?;
            let eps = tape.leaf(e.clone());
            let z = gaussian_sample(tape, post, eps)?;
            let input = tape.concat(&[mq, r, z])?;
            (h1, c1) = lstm_cell(tape, LstmVars { w: v.0[gw], b: v.0[gb] }, input, h1, c1)?;
            let du = tape.linear(h1, v.0[lay.canvas()], None)?;
            u = tape.add(u, du)?;
            steps.push((prior, post));
        }
        if steps.len() != self.hyper.l_steps {
            return Err(Error::Contract("one noise tensor per generation step is required".into()));
        }
        Ok((self.output_graph(tape, v, u)?, steps))
    }

    fn rows_of(tape: &Tape, g: GaussianVar) -> Vec<DiagonalGaussian> {
        (0..tape.value(g.mean).rows()).map(|i| g.row_value(tape, i)).collect()
    }

    fn draw_noise<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Vec<Tensor> {
        let d = self.hyper.d_z;
        (0..self.hyper.l_steps)
            .map(|_| {
                let data = (0..rows * d).map(|_| rng.sample(StandardNormal)).collect();
                Tensor::from_parts(vec![rows, d], data)
            })
            .collect()
    }

    /// `N′` for each query measurement given the representation `r`.
    pub fn gen_forward_prior<R: Rng + ?Sized>(
        &self,
        r: &[f64],
        queries: &[&[f64]],
        mode: LatentMode,
        rng: &mut R,
    ) -> Result<Vec<DiagonalGaussian>> {
        let noise = match mode {
            LatentMode::Deterministic => None,
            LatentMode::Sample => Some(self.draw_noise(queries.len(), rng)),
        };
        self.prior_rows(r, queries, noise.as_deref())
    }

    fn prior_rows(&self, r: &[f64], queries: &[&[f64]], noise: Option<&[Tensor]>) -> Result<Vec<DiagonalGaussian>> {
        if r.len() != self.hyper.d_r {
            return Err(Error::shape("representation", &[r.len()], &[self.hyper.d_r]));
        }
        if queries.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let v = self.leaves(&mut tape);
        let rv = tape.leaf(Tensor::new(vec![1, r.len()], r.to_vec())?);
        let mq = self.queries_leaf(&mut tape, queries)?;
        let out = self.prior_graph(&mut tape, &v, rv, mq, noise)?;
        Ok(Self::rows_of(&tape, out))
    }

    /// Deterministic predicted distributions for each query.
    pub fn predict_queries(&self, r: &[f64], queries: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        Ok(self.prior_rows(r, queries, None)?.iter().map(predict).collect())
    }

    /// Posterior-mode forward pass on concrete values.
    pub fn gen_forward_posterior<R: Rng + ?Sized>(
        &self,
        r: &[f64],
        queries: &[MeasurementRecord],
        rng: &mut R,
    ) -> Result<(Vec<DiagonalGaussian>, Vec<StepTrace>)> {
        let mut tape = Tape::new();
        let v = self.leaves(&mut tape);
        let rv = tape.leaf(Tensor::new(vec![1, r.len()], r.to_vec())?);
        let (mq, pq) = self.query_leaves(&mut tape, queries)?;
        let noise = self.draw_noise(queries.len(), rng);
        let (out, steps) = self.posterior_graph(&mut tape, &v, rv, mq, pq, &noise)?;
        let traces = steps
            .iter()
            .map(|(p, q)| StepTrace { prior: Self::rows_of(&tape, *p), posterior: Self::rows_of(&tape, *q) })
            .collect();
        Ok((Self::rows_of(&tape, out), traces))
    }

    fn query_leaves(&self, tape: &mut Tape, queries: &[MeasurementRecord]) -> Result<(Var, Var)> {
        if queries.is_empty() {
            return Err(Error::Contract("at least one query record is required".into()));
        }
        let ms: Vec<&[f64]> = queries.iter().map(|q| q.m.as_slice()).collect();
        let mq = self.queries_leaf(tape, &ms)?;
        let mut pdata = Vec::with_capacity(queries.len() * self.hyper.k);
        for q in queries {
            self.check_record(&q.m, Some(&q.p))?;
            pdata.extend_from_slice(&q.p);
        }
        let pq = tape.leaf(Tensor::new(vec![queries.len(), self.hyper.k], pdata)?);
        Ok((mq, pq))
    }

    /// Training loss of one state and its gradient for every parameter tensor.
    ///
    /// The loss is `(−ln N′(p′) + Σ_i KL(prior_i ‖ posterior_i))` summed over
    /// queries and divided by their number.
    pub fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        context: &[MeasurementRecord],
        queries: &[MeasurementRecord],
        rng: &mut R,
    ) -> Result<(f64, Vec<Tensor>)> {
        if context.is_empty() {
            return Err(Error::Contract("context must hold at least one record".into()));
        }
        let noise = self.draw_noise(queries.len(), rng);
        self.loss_with_noise(context, queries, &noise, true)
    }

    /// Same loss with caller-supplied latent noise (one `[queries, d_z]`
    /// tensor per step).
    pub fn loss_with_noise(
        &self,
        context: &[MeasurementRecord],
        queries: &[MeasurementRecord],
        noise: &[Tensor],
        with_grads: bool,
    ) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let v = self.leaves(&mut tape);
        let r = self.rep_graph(&mut tape, &v, context)?;
        let (mq, pq) = self.query_leaves(&mut tape, queries)?;
        let (out, steps) = self.posterior_graph(&mut tape, &v, r, mq, pq, noise)?;
        let ll = gaussian_log_density(&mut tape, out, pq)?;
        let mut total = tape.neg(ll);
        for (prior, post) in steps {
            let kl = gaussian_kl(&mut tape, prior, post)?;
            total = tape.add(total, kl)?;
        }
        let loss = tape.scale(total, 1.0 / queries.len() as f64);
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {value}")));
        }
        let grads = if with_grads {
            let g = tape.backward(loss)?;
            v.0.iter().map(|&p| g.wrt(p)).collect()
        } else {
            Vec::new()
        };
        Ok((value, grads))
    }
}

/// Elementwise mean of the per-record representations, exactly rounded.
pub fn aggregate(rs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = rs.first().ok_or_else(|| Error::Contract("aggregate of an empty list".into()))?;
    let mut acc = ExactVecSum::new(first.len());
    for r in rs {
        if r.len() != first.len() {
            return Err(Error::shape("aggregate", &[first.len()], &[r.len()]));
        }
        acc.add(r);
    }
    Ok(acc.mean())
}

/// Loss on concrete values, matching [`Gqnq::loss_and_grads`].
pub fn loss(output: &[DiagonalGaussian], p_true: &[Vec<f64>], traces: &[StepTrace]) -> Result<f64> {
    if output.len() != p_true.len() || output.is_empty() {
        return Err(Error::Contract("one target per predicted distribution is required".into()));
    }
    let mut total = 0.0;
    for (g, p) in output.iter().zip(p_true) {
        total -= log_density(g, p);
    }
    for t in traces {
        for (a, b) in t.prior.iter().zip(&t.posterior) {
            total += kl_divergence(a, b);
        }
    }
    Ok(total / output.len() as f64)
}

/// Reads a distribution off `N′`: its mean clamped at zero and renormalized,
/// or uniform if nothing survives the clamp.
pub fn predict(n: &DiagonalGaussian) -> Vec<f64> {
    let clamped: Vec<f64> = n.mean.iter().map(|&x| if x > 0.0 && x.is_finite() { x } else { 0.0 }).collect();
    let total: f64 = clamped.iter().sum();
    if total > 0.0 && total.is_finite() {
        clamped.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / n.mean.len() as f64; n.mean.len()]
    }
}

/// Inverse of the output-head standard deviation map.
pub fn raw_std_for(std: f64, floor: f64) -> f64 {
    (std - floor).exp_m1().ln()
}
