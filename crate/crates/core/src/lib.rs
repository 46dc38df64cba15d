//! Numerical laboratory for sublinear expectations.

pub mod dp;
pub mod ergodic;
pub mod error;
pub mod gbm;
pub mod gsde;
pub mod lln;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
