//! Experiment runner: JSON configs in, CSV and JSON artifacts out.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod experiments;

pub use artifacts::Manifest;
pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, CliResult};
pub use experiments::{check_model, run_experiment, ModelCheck, RunOptions};
