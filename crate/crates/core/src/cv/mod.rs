//! Truncated-Fock-space bosonic states and binned homodyne statistics.

mod fock;
mod hermite;
mod homodyne;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fock::{gkp_cutoff, make_cat, make_gkp, make_squeezed_thermal, FockState, DEFAULT_CUTOFF};
pub use hermite::{hermite_functions, quadrature_wavefunction};
pub use homodyne::{
    add_probability_noise, bin_edges, homodyne_distribution, jitter_phase, HomodyneGrid,
    PhaseEncoding, BIN_WIDTH, N_BINS, X_LIMIT,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvFamily {
    SqueezedThermal,
    Cat,
    Gkp,
}

impl CvFamily {
    pub const ALL: [CvFamily; 3] = [CvFamily::SqueezedThermal, CvFamily::Cat, CvFamily::Gkp];

    pub fn name(self) -> &'static str {
        match self {
            CvFamily::SqueezedThermal => "squeezed_thermal",
            CvFamily::Cat => "cat",
            CvFamily::Gkp => "gkp",
        }
    }
}

/// Generative parameters of one continuous-variable state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CvStateSpec {
    SqueezedThermal { variance: f64, s_re: f64, s_im: f64 },
    Cat { alpha_re: f64, alpha_im: f64, phi: f64 },
    Gkp { epsilon: f64, theta: f64, phi: f64 },
}

impl CvStateSpec {
    pub fn family(&self) -> CvFamily {
        match self {
            CvStateSpec::SqueezedThermal { .. } => CvFamily::SqueezedThermal,
            CvStateSpec::Cat { .. } => CvFamily::Cat,
            CvStateSpec::Gkp { .. } => CvFamily::Gkp,
        }
    }

    /// Checks the parameter ranges of the three families.
    pub fn validate(&self) -> Result<()> {
        let pi = std::f64::consts::PI;
        let tol = 1e-12;
        let ok = match *self {
            CvStateSpec::SqueezedThermal { variance, s_re, s_im } => {
                let s = Complex64::new(s_re, s_im);
                (1.0..=2.0).contains(&variance) && s.norm() <= 0.5 + tol && (s.norm() == 0.0 || (-tol..=pi + tol).contains(&s.arg()))
            }
            CvStateSpec::Cat { alpha_re, alpha_im, phi } => {
                let a = Complex64::new(alpha_re, alpha_im).norm();
                (1.0 - tol..=3.0 + tol).contains(&a) && (-tol..=pi + tol).contains(&phi)
            }
            CvStateSpec::Gkp { epsilon, theta, phi } => {
                (0.05 - tol..=0.2 + tol).contains(&epsilon) && (0.0..2.0 * pi).contains(&theta) && (-tol..=pi + tol).contains(&phi)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{self:?} outside the family's parameter range")))
        }
    }

    /// Truncation used when building this state.
    pub fn cutoff(&self) -> usize {
        match *self {
            CvStateSpec::Gkp { epsilon, .. } => gkp_cutoff(epsilon),
            _ => DEFAULT_CUTOFF,
        }
    }

    pub fn build(&self) -> Result<FockState> {
        match *self {
            CvStateSpec::SqueezedThermal { variance, s_re, s_im } => {
                make_squeezed_thermal(variance, Complex64::new(s_re, s_im), self.cutoff())
            }
            CvStateSpec::Cat { alpha_re, alpha_im, phi } => make_cat(Complex64::new(alpha_re, alpha_im), phi, self.cutoff()),
            CvStateSpec::Gkp { epsilon, theta, phi } => make_gkp(epsilon, theta, phi, self.cutoff()),
        }
    }
}
