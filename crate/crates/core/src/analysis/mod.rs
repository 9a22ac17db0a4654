//! Unsupervised and supervised analysis of learned representations.

mod classifier;
mod embed;
mod gmm;
mod plot;

pub use classifier::{ClassifierConfig, Regime, RegimeClassifier};
pub use embed::{embed2d, EmbedMethod, TsneConfig};
pub use gmm::{fit_gmm, match_rate, optimal_assignment, GmmModel};
pub use plot::{embedding_csv, line_svg, scatter_svg};

use crate::error::{Error, Result};

/// Checks that `points` is a nonempty rectangular set and returns its dimension.
fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let d = points.first().map(Vec::len).ok_or_else(|| Error::Contract("no points".into()))?;
    if d == 0 {
        return Err(Error::Contract("points have no coordinates".into()));
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::Dimension(format!("point of length {} among points of length {d}", p.len())));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite coordinate".into()));
    }
    Ok(d)
}
