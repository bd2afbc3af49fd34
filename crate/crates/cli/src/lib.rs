//! Experiment runner: configs in, `#`-headed CSV artifacts and a run manifest out.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod experiments;
pub mod verify;

pub use config::{Experiment, ExperimentConfig, Overrides};
pub use error::{RunError, RunResult};
