//! Experiment runner for `curverl-core`: JSON configs and manifests,
//! population and CSV formats, and the orchestration behind the `curverl`
//! command.

pub mod config;
pub mod formats;
pub mod run;

pub use config::{ConfigError, ExperimentConfig};
