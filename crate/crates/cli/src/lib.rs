//! Experiment harness: instance generation, solving, bound profiles, the
//! oracle validation study and the scaling-law pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, Result};
