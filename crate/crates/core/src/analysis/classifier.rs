use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use super::check_points;
use crate::error::{Error, Result};
use crate::training::stream_rng;

/// Ising ferromagnetic regimes separated at mean coupling `J = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    PureFerro,
    MixedFerro,
}

impl Regime {
    /// `J > 1` is pure, `0 < J < 1` mixed; anything else has no regime.
    pub fn from_coupling(j: f64) -> Option<Self> {
        if j > 1.0 {
            Some(Regime::PureFerro)
        } else if j > 0.0 && j < 1.0 {
            Some(Regime::MixedFerro)
        } else {
            None
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::PureFerro => "pure_ferro",
            Regime::MixedFerro => "mixed_ferro",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { hidden: 32, iterations: 2000, learning_rate: 0.01, seed: 0 }
    }
}

/// `logit(r) = w₂ · tanh(W₁ x + b₁) + b₂` on standardized inputs `x`;
/// a positive logit means [`Regime::PureFerro`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeClassifier {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let (b1, b2) = (0.9f64, 0.999f64);
        let (c1, c2) = (1.0 - b1.powi(self.t), 1.0 - b2.powi(self.t));
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grads[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grads[i] * grads[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

impl RegimeClassifier {
    /// Full-batch Adam on the mean binary cross-entropy.
    pub fn train(points: &[Vec<f64>], labels: &[Regime], cfg: &ClassifierConfig) -> Result<Self> {
        let d = check_points(points)?;
        if labels.len() != points.len() {
            return Err(Error::shape("classifier labels", &[labels.len()], &[points.len()]));
        }
        if labels.iter().all(|l| *l == labels[0]) {
            return Err(Error::InvalidParameter("training set has a single class".into()));
        }
        if cfg.hidden == 0 || !(cfg.learning_rate > 0.0) {
            return Err(Error::InvalidParameter("classifier needs hidden units and a positive learning rate".into()));
        }
        let n = points.len() as f64;
        let shift: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let v = points.iter().map(|p| (p[j] - shift[j]).powi(2)).sum::<f64>() / n;
                if v > 1e-24 { v.sqrt() } else { 1.0 }
            })
            .collect();
        let h = cfg.hidden;
        let mut rng = stream_rng(cfg.seed, 0);
        let l1 = (6.0 / (d + h) as f64).sqrt();
        let l2 = (6.0 / (h + 1) as f64).sqrt();
        let u1 = Uniform::new_inclusive(-l1, l1).expect("finite bounds");
        let u2 = Uniform::new_inclusive(-l2, l2).expect("finite bounds");
        // Flat layout: W₁ (h×d), b₁ (h), w₂ (h), b₂.
        let mut theta: Vec<f64> = (0..h * d).map(|_| rng.sample(u1)).collect();
        theta.extend(std::iter::repeat_n(0.0, h));
        theta.extend((0..h).map(|_| rng.sample(u2)));
        theta.push(0.0);
        let xs: Vec<Vec<f64>> =
            points.iter().map(|p| p.iter().zip(&shift).zip(&scale).map(|((v, s), c)| (v - s) / c).collect()).collect();
        let ys: Vec<f64> = labels.iter().map(|l| if *l == Regime::PureFerro { 1.0 } else { 0.0 }).collect();
        let mut adam = Adam { m: vec![0.0; theta.len()], v: vec![0.0; theta.len()], t: 0 };
        let mut grad = vec![0.0; theta.len()];
        let mut hidden = vec![0.0; h];
        for _ in 0..cfg.iterations {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (x, y) in xs.iter().zip(&ys) {
                let (w1, rest) = theta.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h);
                let mut logit = b2[0];
                for k in 0..h {
                    let a: f64 = b1[k] + w1[k * d..(k + 1) * d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                    hidden[k] = a.tanh();
                    logit += w2[k] * hidden[k];
                }
                let dl = (sigmoid(logit) - y) / n;
                for k in 0..h {
                    grad[h * d + h + k] += dl * hidden[k];
                    let da = dl * w2[k] * (1.0 - hidden[k] * hidden[k]);
                    grad[h * d + k] += da;
                    for (g, v) in grad[k * d..(k + 1) * d].iter_mut().zip(x) {
                        *g += da * v;
                    }
                }
                grad[h * d + 2 * h] += dl;
            }
            adam.step(&mut theta, &grad, cfg.learning_rate);
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("classifier training diverged".into()));
        }
        let w1 = theta[..h * d].chunks(d).map(<[f64]>::to_vec).collect();
        Ok(Self {
            shift,
            scale,
            w1,
            b1: theta[h * d..h * d + h].to_vec(),
            w2: theta[h * d + h..h * d + 2 * h].to_vec(),
            b2: theta[h * d + 2 * h],
        })
    }

    pub fn logit(&self, r: &[f64]) -> Result<f64> {
        if r.len() != self.shift.len() {
            return Err(Error::shape("classify", &[r.len()], &[self.shift.len()]));
        }
        let x: Vec<f64> = r.iter().zip(&self.shift).zip(&self.scale).map(|((v, s), c)| (v - s) / c).collect();
        let mut out = self.b2;
        for ((w, b), w2) in self.w1.iter().zip(&self.b1).zip(&self.w2) {
            out += w2 * (b + w.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>()).tanh();
        }
        Ok(out)
    }

    pub fn classify(&self, r: &[f64]) -> Result<Regime> {
        Ok(if self.logit(r)? > 0.0 { Regime::PureFerro } else { Regime::MixedFerro })
    }

    /// Fraction of `points` classified as `labels`.
    pub fn accuracy(&self, points: &[Vec<f64>], labels: &[Regime]) -> Result<f64> {
        if labels.len() != points.len() || points.is_empty() {
            return Err(Error::shape("accuracy", &[labels.len()], &[points.len()]));
        }
        let mut hits = 0;
        for (p, l) in points.iter().zip(labels) {
            hits += usize::from(self.classify(p)? == *l);
        }
        Ok(hits as f64 / points.len() as f64)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
