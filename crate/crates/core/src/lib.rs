//! Option pricing under Markovian and rough stochastic volatility through
//! signature representations of the volatility path.

pub mod analytic;
pub mod error;
pub mod harness;
pub mod learned;
pub mod pricing;
pub mod repr;
pub mod rng;
pub mod signature;
pub mod tensor;
pub mod vol_models;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
