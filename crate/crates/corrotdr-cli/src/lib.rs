//! Command-line driver for the correlation-OTDR toolkit: trace-set
//! simulation, latency analysis, subset RMS studies and chromatic dispersion
//! sweeps, with deterministic on-disk artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod tracefile;

pub use error::{CliError, Result};
