//! Multi-task PPO.

pub mod adam;
pub mod gae;
pub mod ppo;
pub mod rollout;
pub mod run;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::nets::{NetError, NetWidths};
use crate::tasks::{TaskError, TaskId};

pub use adam::Adam;
pub use gae::compute_gae;
pub use ppo::{clip_grad_norms, grad_norm, minibatch_loss, ppo_update, Sample, UpdateStats};
pub use rollout::{collect_rollouts, Collector, EpisodeRecord, RolloutBuffer, Transition};
pub use run::{train, IterationMetrics, TrainCheckpoint, Trainer, TRAIN_SCHEMA};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("gae inputs differ in length: {rewards} rewards, {values} values, {dones} flags")]
    LengthMismatch { rewards: usize, values: usize, dones: usize },
    #[error("non-finite loss {loss} (gradient norm {grad_norm})")]
    NonFiniteLoss { loss: f64, grad_norm: f64 },
    #[error("environment {env} ({task}): {source}")]
    Env {
        env: usize,
        task: TaskId,
        #[source]
        source: TaskError,
    },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint schema {found}, expected {expected}")]
    Schema { expected: u32, found: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Per-task discount overrides.
    pub gamma_per_task: BTreeMap<TaskId, f64>,
    pub gae_lambda: f64,
    pub clip: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Control steps per environment per iteration.
    pub rollout_length: usize,
    pub envs_per_task: usize,
    /// Environment steps summed over all tasks.
    pub total_samples: u64,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
    /// Applied separately to the policy-side and the critic gradients.
    pub max_grad_norm: f64,
    pub seed: u64,
    pub normalize_observations: bool,
    pub observation_clip: f64,
    pub normalize_advantages: bool,
    pub widths: NetWidths,
    /// Iterations between checkpoints; 0 keeps only the first and last.
    pub checkpoint_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gamma_per_task: BTreeMap::new(),
            gae_lambda: 0.95,
            clip: 0.2,
            learning_rate: 3e-4,
            epochs: 10,
            minibatch_size: 512,
            rollout_length: 256,
            envs_per_task: 8,
            total_samples: 40_000_000,
            entropy_coeff: 0.0,
            value_coeff: 0.5,
            max_grad_norm: 1.0,
            seed: 0,
            normalize_observations: true,
            observation_clip: 10.0,
            normalize_advantages: true,
            widths: NetWidths::default(),
            checkpoint_interval: 50,
        }
    }
}

impl TrainConfig {
    pub fn gamma_for(&self, task: TaskId) -> f64 {
        self.gamma_per_task.get(&task).copied().unwrap_or(self.gamma)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.gamma) || !self.gamma_per_task.values().all(|g| unit(*g)) {
            return bad("discount must lie in [0, 1]");
        }
        if !unit(self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip > 0.0) || !(self.learning_rate >= 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("clip and max_grad_norm must be positive, learning_rate non-negative");
        }
        if self.rollout_length == 0 || self.envs_per_task == 0 || self.minibatch_size == 0 {
            return bad("rollout_length, envs_per_task and minibatch_size must be positive");
        }
        Ok(())
    }
}
