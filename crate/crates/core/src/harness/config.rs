//! Experiment configuration file.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::HarnessError;
use crate::nets::ArchitectureVariant;
use crate::tasks::{EnvConfig, TaskId, Track};
use crate::trainer::TrainConfig;

pub const CONFIG_SCHEMA: u32 = 1;

/// The default configuration with every field spelled out.
pub const DEFAULT_CONFIG: &str = include_str!("../../data/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub racing_starts: usize,
    /// Racing episode length during evaluation, s.
    pub racing_horizon: f64,
    pub stabilization_trials: usize,
    pub tracking_trials: usize,
    pub seed: u64,
    /// Iterations between evaluations during training; 0 evaluates at the end only.
    pub interval: u64,
    /// Write per-step trajectory CSVs for the final evaluation.
    pub trajectories: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            racing_starts: 64,
            racing_horizon: 30.0,
            stabilization_trials: 64,
            tracking_trials: 16,
            seed: 1234,
            interval: 0,
            trajectories: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_variant")]
    pub variant: ArchitectureVariant,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<TaskId>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_variant() -> ArchitectureVariant {
    ArchitectureVariant::Ours
}

fn default_tasks() -> Vec<TaskId> {
    TaskId::ALL.to_vec()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema: CONFIG_SCHEMA,
            name: default_name(),
            variant: default_variant(),
            tasks: default_tasks(),
            seeds: default_seeds(),
            train: TrainConfig::default(),
            env: EnvConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML. Errors name the offending field path. A relative
    /// `env.racing.track_file` is resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, HarnessError> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| HarnessError::Config { path: String::new(), message: e.to_string() })?;
        let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        if cfg.schema != CONFIG_SCHEMA {
            return Err(HarnessError::Config {
                path: "schema".into(),
                message: format!("unsupported schema {}, expected {CONFIG_SCHEMA}", cfg.schema),
            });
        }
        if cfg.tasks.is_empty() {
            return Err(HarnessError::Config { path: "tasks".into(), message: "no tasks selected".into() });
        }
        if cfg.seeds.is_empty() {
            return Err(HarnessError::Config { path: "seeds".into(), message: "no seeds given".into() });
        }
        cfg.train
            .validate()
            .map_err(|e| HarnessError::Config { path: "train".into(), message: e.to_string() })?;
        if let Some(file) = &cfg.env.racing.track_file {
            let p = Path::new(file);
            let p = match base_dir {
                Some(b) if p.is_relative() => b.join(p),
                _ => p.to_path_buf(),
            };
            cfg.env.track = Track::load(&p)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent())
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config { path: String::new(), message: e.to_string() })
    }
}
