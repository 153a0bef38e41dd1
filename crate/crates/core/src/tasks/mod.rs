//! Racing, stabilization and velocity-tracking environments.

pub mod curriculum;
pub mod env;
pub mod profile;
pub mod reward;
pub mod track;

use crate::dynamics::{DynamicsError, QuadState};
use crate::geom::rotmat_to_6d;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub use curriculum::{curriculum_update, CurriculumConfig, CurriculumState};
pub use env::{
    Env, EnvConfig, EpisodeSummary, GatePass, RacingConfig, StabilizationConfig, StepEvents, StepResult,
    TerminationReason, TrackingConfig,
};
pub use profile::{sample_velocity_profile, VelocityProfile};
pub use reward::Reward;
pub use track::{gate_pass_check, Gate, Track};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("step called on a terminated episode")]
    EpisodeTerminated,
    #[error("observation for {task} has task-specific length {got}, expected {expected}")]
    ObservationLength { task: TaskId, got: usize, expected: usize },
    #[error("track: {0}")]
    Track(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

pub const SHARED_OBS_LEN: usize = 19;
pub const NUM_TASKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskId {
    Racing,
    Stabilization,
    Tracking,
}

impl TaskId {
    pub const ALL: [TaskId; NUM_TASKS] = [TaskId::Racing, TaskId::Stabilization, TaskId::Tracking];

    pub fn index(self) -> usize {
        match self {
            TaskId::Racing => 0,
            TaskId::Stabilization => 1,
            TaskId::Tracking => 2,
        }
    }

    /// Task-specific observation length without the one-hot code.
    pub fn base_obs_len(self) -> usize {
        match self {
            TaskId::Racing => 24,
            TaskId::Stabilization => 4,
            TaskId::Tracking => 6,
        }
    }

    pub fn task_obs_len(self, one_hot: bool) -> usize {
        self.base_obs_len() + if one_hot { NUM_TASKS } else { 0 }
    }

    /// Identifies a task from its task-specific observation length.
    pub fn from_obs_len(len: usize, one_hot: bool) -> Option<TaskId> {
        TaskId::ALL.into_iter().find(|t| t.task_obs_len(one_hot) == len)
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Racing => "racing",
            TaskId::Stabilization => "stabilization",
            TaskId::Tracking => "tracking",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| TaskError::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub shared: [f64; SHARED_OBS_LEN],
    pub task_specific: Vec<f64>,
    pub task: TaskId,
}

impl Observation {
    /// `shared ‖ task_specific`, the critic input.
    pub fn full(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(SHARED_OBS_LEN + self.task_specific.len());
        v.extend_from_slice(&self.shared);
        v.extend_from_slice(&self.task_specific);
        v
    }

    pub fn len(&self) -> usize {
        SHARED_OBS_LEN + self.task_specific.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// `[p, first two columns of R, v, ω, a_prev]`.
pub fn assemble_shared_obs(state: &QuadState, a_prev: &[f64; 4]) -> [f64; SHARED_OBS_LEN] {
    let r6 = rotmat_to_6d(&state.rotation()).0;
    let mut o = [0.0; SHARED_OBS_LEN];
    o[0..3].copy_from_slice(state.position.as_slice());
    o[3..9].copy_from_slice(&r6);
    o[9..12].copy_from_slice(state.velocity.as_slice());
    o[12..15].copy_from_slice(state.body_rates.as_slice());
    o[15..19].copy_from_slice(a_prev);
    o
}

/// Corner offsets of the next gate from the drone (12) followed by the corner
/// offsets of the gate after it from the next gate (12).
pub fn racing_task_obs(state: &QuadState, track: &Track, next_gate: usize) -> [f64; 24] {
    let next = track.gate(next_gate).corners();
    let after = track.gate(next_gate + 1).corners();
    let mut o = [0.0; 24];
    for k in 0..4 {
        let d1 = next[k] - state.position;
        let d2 = after[k] - next[k];
        o[3 * k..3 * k + 3].copy_from_slice(d1.as_slice());
        o[12 + 3 * k..12 + 3 * k + 3].copy_from_slice(d2.as_slice());
    }
    o
}
