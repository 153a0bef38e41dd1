//! Multi-task reinforcement learning for quadrotor control.
//!
//! The crate holds the rigid-body simulator, the three flight tasks, the
//! shared-encoder policy networks, a PPO trainer and the evaluation harness.

pub mod dynamics;
pub mod geom;
pub mod harness;
pub mod nets;
pub mod tasks;
pub mod trainer;

pub use dynamics::{QuadParams, QuadState};
pub use geom::{Quaternion, Rot6D, RotMat, Vec3};
pub use harness::{EvalConfig, EvalReport, ExperimentConfig, HarnessError, Pilot};
pub use nets::{ArchitectureVariant, NetError, NetWidths, PolicyCheckpoint, PolicyParams};
pub use tasks::{Env, EnvConfig, Observation, TaskError, TaskId};
pub use trainer::{TrainConfig, TrainError, Trainer};
