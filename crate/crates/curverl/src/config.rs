//! Experiment configuration and its JSON form.
//!
//! The same document serves as input config and as run manifest: unknown keys
//! are rejected and every field is written back on export.

use std::fs;
use std::path::{Path, PathBuf};

use curverl_core::eval::EvalSpec;
use curverl_core::{PopulationSpec, TrainConfig};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub population: PopulationSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            population: PopulationSpec::default(),
            train: TrainConfig::default(),
            eval: EvalSpec::default(),
            output_dir: default_output_dir(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("unsupported config version {0} (expected {CONFIG_VERSION}) in field `version`")]
    Version(u32),
    #[error("field `output_dir` must not be empty")]
    EmptyOutputDir,
    #[error(transparent)]
    Invalid(#[from] curverl_core::Error),
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(ConfigError::EmptyOutputDir);
        }
        self.population.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        Ok(())
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use curverl_core::WeightScheme;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_json(text, Path::new("test.json"))
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let c = parse(r#"{"version": 1}"#).unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn round_trips_through_json() {
        let mut c = ExperimentConfig::default();
        c.train.scheme = WeightScheme::EntropicRisk { eta: 0.1 + 0.2 };
        c.train.learning_rate = 1.0 / 3.0;
        assert_eq!(parse(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let e = parse(r#"{"version": 1, "train": {"stepz": 3}}"#).unwrap_err();
        assert!(e.to_string().contains("stepz"), "{e}");
        assert!(parse(r#"{"version": 1, "extra": 0}"#).is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let e = parse(r#"{"version": 1, "train": {"t0": 0}}"#).unwrap_err();
        assert!(e.to_string().contains("train.t0"), "{e}");
        let e = parse(r#"{"version": 2}"#).unwrap_err();
        assert!(e.to_string().contains("version"), "{e}");
        let e = parse(r#"{"version": 1, "population": {"size": 0}}"#).unwrap_err();
        assert!(e.to_string().contains("population.size"), "{e}");
    }
}
