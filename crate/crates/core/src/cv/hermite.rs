use std::f64::consts::PI;

/// `ψ_0(x) … ψ_n_max(x)` for the quadrature `x̂ = (â + â†)/2`, whose vacuum
/// density is `√(2/π) e^{−2x²}`.
///
/// Uses the stable three-term recurrence of the normalized Hermite functions
/// in `u = √2 x`.
pub fn hermite_functions(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let u = std::f64::consts::SQRT_2 * x;
    let scale = 2f64.powf(0.25);
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * u * u).exp();
    out.push(scale * cur);
    for n in 0..n_max {
        let next = (2.0 / (n + 1) as f64).sqrt() * u * cur - (n as f64 / (n + 1) as f64).sqrt() * prev;
        prev = cur;
        cur = next;
        out.push(scale * cur);
    }
    out
}

/// Single Hermite function `ψ_n(x)`.
pub fn quadrature_wavefunction(n: usize, x: f64) -> f64 {
    hermite_functions(n, x)[n]
}
