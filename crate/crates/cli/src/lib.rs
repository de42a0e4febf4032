//! Command-line driver: single-sequence detection, seeded benchmarks,
//! clustering sweeps and coherence ablations.

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;

pub use error::{CliError, Result};
