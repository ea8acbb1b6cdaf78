//! Command line, experiment configs, sweep orchestration, result tables and
//! SVG figures for the spike-timing experiments.

pub mod cli;
pub mod config;
pub mod error;
pub mod plot;
pub mod sweep;

pub use config::{Experiment, ExperimentConfig, ModelKind};
pub use error::{Error, Result};
pub use sweep::{run_sweep, ResultRow, SweepOutcome};
