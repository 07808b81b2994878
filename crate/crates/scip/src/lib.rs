//! Experiment runner for selective conformal inference.
//!
//! [`config`] parses flat `key = value` experiment files, [`experiment`]
//! runs Monte-Carlo replications in parallel and writes CSV reports, and
//! [`equivalence`] cross-checks procedures that must agree exactly.

pub mod cli;
pub mod config;
pub mod equivalence;
mod error;
pub mod experiment;

pub use config::{ExperimentConfig, ExperimentKind, Method, RawConfig};
pub use error::{ConfigError, RunError};
pub use scip_core;
