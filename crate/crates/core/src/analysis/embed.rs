use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::check_points;
use crate::error::{Error, Result};
use crate::training::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMethod {
    Pca,
    Tsne,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self { perplexity: 30.0, iterations: 1000, learning_rate: 200.0, seed: 0 }
    }
}

/// Two-dimensional embedding of `points`.
pub fn embed2d(points: &[Vec<f64>], method: EmbedMethod, cfg: &TsneConfig) -> Result<Vec<[f64; 2]>> {
    check_points(points)?;
    if points.len() < 3 {
        return Err(Error::Contract(format!("embedding needs at least 3 points, got {}", points.len())));
    }
    match method {
        EmbedMethod::Pca => Ok(pca2(points)),
        EmbedMethod::Tsne => tsne(points, cfg),
    }
}

/// Projection onto the two leading principal axes; missing axes (rank < 2) give zeros.
fn pca2(points: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let n = points.len();
    let d = points[0].len();
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    let cov = x.transpose() * &x / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut axes: Vec<Option<Vec<f64>>> = Vec::new();
    for &k in order.iter().take(2) {
        if eig.eigenvalues[k] <= 1e-12 * scale || eig.eigenvalues[k] <= 0.0 {
            axes.push(None);
            continue;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if pivot < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        axes.push(Some(v));
    }
    axes.resize(2, None);
    (0..n)
        .map(|i| {
            let proj = |a: &Option<Vec<f64>>| a.as_ref().map_or(0.0, |v| (0..d).map(|j| x[(i, j)] * v[j]).sum());
            [proj(&axes[0]), proj(&axes[1])]
        })
        .collect()
}

fn squared_distances(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Row-conditional Gaussian affinities whose entropy matches `ln(perplexity)`.
fn conditional_p(dist: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let row = &dist[i * n..(i + 1) * n];
        // Sorted order makes duplicate points produce bit-identical rows.
        let mut sorted: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| row[j]).collect();
        sorted.sort_by(f64::total_cmp);
        let min_d = sorted[0];
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        let mut probs = vec![0.0; n];
        for _ in 0..200 {
            let mut sum = 0.0;
            let mut dot = 0.0;
            for d in &sorted {
                let w = (-(d - min_d) * beta).exp();
                sum += w;
                dot += w * (d - min_d);
            }
            for j in 0..n {
                probs[j] = if j == i { 0.0 } else { (-(row[j] - min_d) * beta).exp() / sum };
            }
            let entropy = sum.ln() + beta * dot / sum;
            let diff = entropy - target;
            if diff.abs() < 1e-10 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        p[i * n..(i + 1) * n].copy_from_slice(&probs);
    }
    p
}

/// Exact t-SNE with early exaggeration, momentum and per-coordinate gains.
fn tsne(points: &[Vec<f64>], cfg: &TsneConfig) -> Result<Vec<[f64; 2]>> {
    let n = points.len();
    if !(cfg.perplexity > 0.0) || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidParameter("t-SNE perplexity and learning rate must be positive".into()));
    }
    let perplexity = cfg.perplexity.min((n - 1) as f64 / 3.0).max(1.0);
    let dist = squared_distances(points);
    let cond = conditional_p(&dist, n, perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    let mut rng = stream_rng(cfg.seed, 0);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = Vec::with_capacity(n);
    for i in 0..n {
        match (0..i).find(|&j| points[j] == points[i]) {
            Some(j) => y.push(y[j]),
            None => y.push([normal.sample(&mut rng), normal.sample(&mut rng)]),
        }
    }
    let mut vel = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut q = vec![0.0; n * n];
    let exaggeration_end = 250.min(cfg.iterations);
    for it in 0..cfg.iterations {
        let exaggeration = if it < exaggeration_end { 12.0 } else { 1.0 };
        let momentum = if it < exaggeration_end { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    let v = 1.0 / (1.0 + dx * dx + dy * dy);
                    q[i * n + j] = v;
                    z += v;
                }
            }
        }
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i != j {
                    let w = q[i * n + j];
                    let m = (exaggeration * p[i * n + j] - w / z) * w;
                    g[0] += 4.0 * m * (y[i][0] - y[j][0]);
                    g[1] += 4.0 * m * (y[i][1] - y[j][1]);
                }
            }
            for c in 0..2 {
                gains[i][c] = if (g[c] > 0.0) != (vel[i][c] > 0.0) { gains[i][c] + 0.2 } else { (gains[i][c] * 0.8).max(0.01) };
                vel[i][c] = momentum * vel[i][c] - cfg.learning_rate * gains[i][c] * g[c];
            }
        }
        for i in 0..n {
            y[i][0] += vel[i][0];
            y[i][1] += vel[i][1];
        }
        let c = [y.iter().map(|v| v[0]).sum::<f64>() / n as f64, y.iter().map(|v| v[1]).sum::<f64>() / n as f64];
        y.iter_mut().for_each(|v| {
            v[0] -= c[0];
            v[1] -= c[1];
        });
    }
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("t-SNE diverged".into()));
    }
    Ok(y)
}
