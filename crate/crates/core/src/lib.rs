//! Adaptive orthogonal priors for sequences of basis-expanded functions, and a
//! conjugate Gibbs sampler for Bayesian functional principal component analysis.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod prior;
mod quadrature;
pub mod random;
pub mod sampler;
pub mod simulation;

pub use error::{AopError, Result};
