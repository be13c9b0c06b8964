//! Experiment runner: configuration, execution of each mode, and artifacts.

pub mod config;
pub mod report;
pub mod run;

pub use config::{Checkpoints, ExperimentConfig, Mode, Overrides, PovmSpec};
pub use run::{run_experiment, RunSummary};
