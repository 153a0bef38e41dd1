//! Encoders, actor and critics with hand-written backpropagation.

pub mod checkpoint;
pub mod mlp;
pub mod normalize;
pub mod policy;

use crate::tasks::TaskId;
use thiserror::Error;

pub use checkpoint::{load_policy, save_policy, PolicyCheckpoint, POLICY_SCHEMA};
pub use mlp::{Activation, Linear, Mlp, MlpSpec, Tape};
pub use normalize::{ObsNormalizer, RunningStat};
pub use policy::{
    gaussian_entropy, gaussian_log_prob, sample_action, ArchitectureVariant, GroupPass, NetWidths,
    ParameterSetCounts, PolicyParams, ACTION_DIM, INITIAL_LOG_STD, MIN_LOG_STD,
};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("input width {got}, expected {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("network has no parameters for task {0}")]
    UnknownTask(TaskId),
    #[error("unknown architecture variant `{0}`")]
    UnknownVariant(String),
    #[error("checkpoint schema {found}, expected {expected}")]
    Schema { expected: u32, found: u32 },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
}
