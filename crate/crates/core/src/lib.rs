//! Generative query networks for learning quantum measurement statistics.

pub mod ad;
pub mod analysis;
pub mod cv;
pub mod data;
pub mod error;
pub mod eval;
pub mod gen;
pub mod model;
pub mod numeric;
pub mod parallel;
pub mod spin;
pub mod training;

pub use error::{Error, Result};
