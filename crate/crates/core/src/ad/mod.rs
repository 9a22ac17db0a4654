//! Dense tensors, reverse-mode differentiation and the few neural primitives
//! the generative query network is built from.

mod adam;
mod nn;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use nn::{
    dense, gaussian_kl, gaussian_log_density, gaussian_sample, kl_divergence, log_density,
    lstm_cell, Activation, DiagonalGaussian, GaussianVar, LstmVars,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

