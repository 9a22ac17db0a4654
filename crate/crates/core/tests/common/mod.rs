#![allow(dead_code)]

pub mod cv_oracle;
pub mod gradcheck;
pub mod spin_oracle;
