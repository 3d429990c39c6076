//! Spin-current transport through a two-spin junction coupled to polarized
//! XXZ spin-chain leads.
//!
//! The crate provides lead correlators and rates, a memory-kernel (Born)
//! integrator and its linear-response limit, global and local Markovian
//! steady states, spectral diagnostics, a state-vector reference simulator
//! with boundary absorbers, and a configuration-driven pipeline.

pub mod bath;
pub mod born;
pub mod error;
pub mod junction;
pub mod linalg;
pub mod oracle;
pub mod pipeline;
mod repr;
mod serde_inf;
pub mod special;
pub mod spectral;
pub mod steady;

pub use error::{Error, Result};
