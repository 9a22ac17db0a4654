//! Closed-form homodyne statistics.

use gqnq::cv::*;
use num_complex::Complex64;
use statrs::function::erf::erf;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn vacuum(cutoff: usize) -> FockState {
    let mut v = vec![c(0.0, 0.0); cutoff + 1];
    v[0] = c(1.0, 0.0);
    FockState::pure(v).unwrap()
}

/// Bin masses of N(mean, var) with both tails folded into the edge bins.
pub fn gaussian_bins(mean: f64, var: f64) -> Vec<f64> {
    let sd = var.sqrt();
    let cdf = |x: f64| 0.5 * (1.0 + erf((x - mean) / (sd * 2f64.sqrt())));
    let edges = bin_edges();
    (0..N_BINS)
        .map(|b| {
            let lo = if b == 0 { 0.0 } else { cdf(edges[b]) };
            let hi = if b == N_BINS - 1 { 1.0 } else { cdf(edges[b + 1]) };
            hi - lo
        })
        .collect()
}
