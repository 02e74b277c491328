//! Experiment configuration, sweeps over the Knudsen number and power-law fits.

pub mod config;
pub mod sweep;

pub use config::{ExperimentConfig, PatternKind};
pub use sweep::{fit_power_law, run_single, run_sweep, setup, Domain, PowerFit, RunOutput, RunSummary, SweepFailure, SweepResult};
