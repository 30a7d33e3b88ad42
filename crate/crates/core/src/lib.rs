//! Simulation laboratory for studying whether predictive performance of
//! Bayesian GLMs tracks recovery of a causal effect under causal and
//! distributional misspecification.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dgp;
pub mod engine;
pub mod error;
pub mod families;
pub mod links;
pub mod metrics;
pub mod par;
pub mod presets;
pub mod quadrature;
pub mod runner;
pub mod seeds;
pub mod special;

pub use error::{Error, Result};
