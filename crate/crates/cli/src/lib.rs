//! Config-driven experiment harness around the `ambicomp` library.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod report;

pub use commands::{cmd_bench, cmd_eval, cmd_report, cmd_run, cmd_synth};
pub use config::ExperimentConfig;
pub use error::CliError;
