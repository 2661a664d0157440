//! Simulator for sparse federated training with weight re-parametrization.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod metrics;
pub mod nn;
pub mod reparam;
pub mod sparsity;
pub mod tensor;

pub use error::{Error, Result};
