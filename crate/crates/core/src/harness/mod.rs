//! Evaluation, experiment orchestration and data export.

pub mod config;
pub mod eval;
pub mod experiment;
pub mod export;
pub mod pilot;

use thiserror::Error;

use crate::nets::NetError;
use crate::tasks::TaskError;
use crate::trainer::TrainError;

pub use config::{EvalConfig, ExperimentConfig, CONFIG_SCHEMA, DEFAULT_CONFIG};
pub use eval::{
    eval_racing, eval_stabilization, eval_tracking, full_difficulty, run_episode, write_traces, EpisodeTrace,
    RacingEval, StabilizationEval, StabilizationTrial, TrackingEval,
};
pub use experiment::{evaluate_pilot, evaluate_policy, run_experiment, run_training, summarize, EvalReport, SummaryRow};
pub use export::export_plots;
pub use pilot::{
    AccelerationTracker, ConstantPilot, GateFollower, GatePath, HoverPilot, Pilot, PolicyPilot, VelocityPilot,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("{file}: unsupported schema {found}")]
    Schema { file: String, found: u32 },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
