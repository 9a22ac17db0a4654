use rand::Rng;
use serde::{Deserialize, Serialize};

use super::check_points;
use crate::error::{Error, Result};
use crate::training::stream_rng;

const RESTARTS: u64 = 10;
const MAX_ITER: usize = 500;

/// Mixture of axis-aligned Gaussians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    /// Total log-likelihood of the data it was fitted to.
    pub log_likelihood: f64,
}

impl GmmModel {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    /// `ln(w_c N(x; μ_c, diag σ²_c))` for every component.
    fn component_log_densities(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(w, (mu, var))| {
                let mut l = w.ln();
                for ((xi, m), v) in x.iter().zip(mu).zip(var) {
                    l -= 0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (xi - m) * (xi - m) / v);
                }
                l
            })
            .collect()
    }

    /// Most probable component of `x`.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.component_log_densities(x))
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut pick = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[idx].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

fn fit_once(points: &[Vec<f64>], k: usize, seed: u64, restart: u64) -> GmmModel {
    let n = points.len();
    let d = points[0].len();
    let mut rng = stream_rng(seed, restart);
    let global_mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
    let global_var: Vec<f64> =
        (0..d).map(|j| points.iter().map(|p| (p[j] - global_mean[j]).powi(2)).sum::<f64>() / n as f64).collect();
    let floor: Vec<f64> = global_var.iter().map(|v| (v * 1e-6).max(1e-12)).collect();
    let start_var: Vec<f64> = global_var.iter().zip(&floor).map(|(v, f)| v.max(*f)).collect();
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: kmeans_pp(points, k, &mut rng),
        variances: vec![start_var; k],
        log_likelihood: f64::NEG_INFINITY,
    };
    let mut resp = vec![vec![0.0; k]; n];
    for _ in 0..MAX_ITER {
        let mut ll = 0.0;
        let mut point_ll = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let l = model.component_log_densities(p);
            let z = log_sum_exp(&l);
            point_ll[i] = z;
            ll += z;
            for c in 0..k {
                resp[i][c] = (l[c] - z).exp();
            }
        }
        let improved = ll - model.log_likelihood;
        model.log_likelihood = ll;
        if improved.abs() <= 1e-10 * ll.abs().max(1.0) {
            break;
        }
        for c in 0..k {
            let nk: f64 = resp.iter().map(|r| r[c]).sum();
            if nk < 1e-8 {
                let worst = argmin(&point_ll);
                model.means[c] = points[worst].clone();
                model.variances[c] = global_var.iter().zip(&floor).map(|(v, f)| v.max(*f)).collect();
                model.weights[c] = 1.0 / n as f64;
                point_ll[worst] = f64::INFINITY;
                continue;
            }
            model.weights[c] = nk / n as f64;
            for j in 0..d {
                let m = resp.iter().zip(points).map(|(r, p)| r[c] * p[j]).sum::<f64>() / nk;
                let v = resp.iter().zip(points).map(|(r, p)| r[c] * (p[j] - m).powi(2)).sum::<f64>() / nk;
                model.means[c][j] = m;
                model.variances[c][j] = v.max(floor[j]);
            }
        }
        let total: f64 = model.weights.iter().sum();
        model.weights.iter_mut().for_each(|w| *w /= total);
    }
    model
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// EM with k-means++ starts; the best of ten restarts by likelihood, and
/// the hard label of every point under it.
pub fn fit_gmm(points: &[Vec<f64>], k: usize, seed: u64) -> Result<(GmmModel, Vec<usize>)> {
    check_points(points)?;
    if k == 0 || k > points.len() {
        return Err(Error::InvalidParameter(format!("{k} components for {} points", points.len())));
    }
    let mut best: Option<GmmModel> = None;
    for restart in 0..RESTARTS {
        let m = fit_once(points, k, seed, restart);
        if best.as_ref().is_none_or(|b| m.log_likelihood > b.log_likelihood) {
            best = Some(m);
        }
    }
    let model = best.expect("at least one restart");
    if !model.log_likelihood.is_finite() {
        return Err(Error::Numeric("mixture likelihood is not finite".into()));
    }
    let labels = points.iter().map(|p| model.predict(p)).collect();
    Ok((model, labels))
}

/// Minimum-cost perfect matching of a square cost matrix; `result[row] = column`.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Cluster-to-type assignment maximizing agreement; `result[cluster] = type`,
/// `None` for clusters left without a type.
pub fn optimal_assignment(labels: &[usize], truth: &[usize]) -> Result<Vec<Option<usize>>> {
    if labels.len() != truth.len() {
        return Err(Error::shape("optimal_assignment", &[labels.len()], &[truth.len()]));
    }
    let kc = labels.iter().max().map_or(0, |m| m + 1);
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let n = kc.max(kt);
    let mut counts = vec![vec![0.0; n]; n];
    for (&c, &t) in labels.iter().zip(truth) {
        counts[c][t] += 1.0;
    }
    let cost: Vec<Vec<f64>> = counts.iter().map(|row| row.iter().map(|c| -c).collect()).collect();
    Ok(hungarian(&cost).into_iter().take(kc).map(|t| (t < kt).then_some(t)).collect())
}

/// Fraction of points whose cluster maps to their true type under the best assignment.
pub fn match_rate(labels: &[usize], truth: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Contract("no labels".into()));
    }
    let assign = optimal_assignment(labels, truth)?;
    let hits = labels.iter().zip(truth).filter(|(c, t)| assign[**c] == Some(**t)).count();
    Ok(hits as f64 / labels.len() as f64)
}
