//! Bayesian inversion with multi-layered non-stationary Gaussian field priors.

pub mod archive;
pub mod baselines;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod hierarchy;
pub mod image;
pub mod inference;
mod linalg;
pub mod operators;
pub mod rng;
pub mod spectral;

pub use error::{Error, ErrorKind, Result};
