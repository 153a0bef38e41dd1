//! Shared-encoder / multi-critic policy and its baseline variants.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::mlp::{Activation, Mlp, MlpSpec, Tape};
use super::NetError;
use crate::tasks::{Observation, TaskId, SHARED_OBS_LEN};

pub const ACTION_DIM: usize = 4;
const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// How parameters are shared between tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchitectureVariant {
    /// Shared dynamics encoder; per-task encoders read `[shared ‖ task]`.
    Ours,
    /// Only the actor is shared; every task owns both encoders and its critic.
    ActorOnly,
    /// Shared dynamics encoder; per-task encoders read the task observation only.
    Separate,
    /// One independent network per task.
    SingleTask,
}

impl ArchitectureVariant {
    pub const ALL: [ArchitectureVariant; 4] = [
        ArchitectureVariant::Ours,
        ArchitectureVariant::ActorOnly,
        ArchitectureVariant::Separate,
        ArchitectureVariant::SingleTask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArchitectureVariant::Ours => "ours",
            ArchitectureVariant::ActorOnly => "actor-only",
            ArchitectureVariant::Separate => "separate",
            ArchitectureVariant::SingleTask => "single-task",
        }
    }

    /// Whether the task encoder also reads the shared observation.
    fn fuses_shared(self) -> bool {
        !matches!(self, ArchitectureVariant::Separate)
    }
}

impl fmt::Display for ArchitectureVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchitectureVariant {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArchitectureVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| NetError::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetWidths {
    pub encoder_hidden: usize,
    pub embedding: usize,
    pub actor_hidden: usize,
    pub critic_hidden: usize,
}

impl Default for NetWidths {
    fn default() -> Self {
        Self { encoder_hidden: 128, embedding: 32, actor_hidden: 256, critic_hidden: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub variant: ArchitectureVariant,
    pub widths: NetWidths,
    pub one_hot: bool,
    pub tasks: Vec<TaskId>,
    /// Present for every variant except `ActorOnly`.
    pub shared_encoder: Option<Mlp>,
    /// Per-task dynamics encoders, `ActorOnly` only.
    pub dynamics_encoders: BTreeMap<TaskId, Mlp>,
    pub task_encoders: BTreeMap<TaskId, Mlp>,
    pub actor: Mlp,
    /// State-independent log standard deviation of the Gaussian policy.
    pub log_std: [f64; ACTION_DIM],
    pub critics: BTreeMap<TaskId, Mlp>,
}

/// Initial exploration noise and its floor.
pub const INITIAL_LOG_STD: f64 = -std::f64::consts::LN_2;
pub const MIN_LOG_STD: f64 = -4.605_170_185_988_091;

impl PolicyParams {
    pub fn new<R: Rng>(
        variant: ArchitectureVariant,
        tasks: &[TaskId],
        widths: NetWidths,
        one_hot: bool,
        rng: &mut R,
    ) -> Result<Self, NetError> {
        if tasks.is_empty() {
            return Err(NetError::InvalidSpec("at least one task is required".into()));
        }
        if variant == ArchitectureVariant::SingleTask && tasks.len() != 1 {
            return Err(NetError::InvalidSpec("single-task networks serve exactly one task".into()));
        }
        let mut tasks = tasks.to_vec();
        tasks.sort();
        tasks.dedup();
        let root2 = 2f64.sqrt();
        let w = &widths;
        let encoder = |input: usize| {
            MlpSpec::new(&[input, w.encoder_hidden, w.encoder_hidden, w.embedding], Activation::Relu, Activation::Identity)
        };
        let shared_encoder = match variant {
            ArchitectureVariant::ActorOnly => None,
            _ => Some(Mlp::orthogonal(encoder(SHARED_OBS_LEN), rng, root2, 1.0)?),
        };
        let mut dynamics_encoders = BTreeMap::new();
        let mut task_encoders = BTreeMap::new();
        let mut critics = BTreeMap::new();
        for &t in &tasks {
            let task_len = t.task_obs_len(one_hot);
            if variant == ArchitectureVariant::ActorOnly {
                dynamics_encoders.insert(t, Mlp::orthogonal(encoder(SHARED_OBS_LEN), rng, root2, 1.0)?);
            }
            let input = if variant.fuses_shared() { SHARED_OBS_LEN + task_len } else { task_len };
            task_encoders.insert(t, Mlp::orthogonal(encoder(input), rng, root2, 1.0)?);
        }
        let actor = Mlp::orthogonal(
            MlpSpec::new(
                &[2 * w.embedding, w.actor_hidden, w.actor_hidden, ACTION_DIM],
                Activation::Relu,
                Activation::Tanh,
            ),
            rng,
            root2,
            0.01,
        )?;
        for &t in &tasks {
            let spec = MlpSpec::new(
                &[SHARED_OBS_LEN + t.task_obs_len(one_hot), w.critic_hidden, w.critic_hidden, 1],
                Activation::Relu,
                Activation::Identity,
            );
            critics.insert(t, Mlp::orthogonal(spec, rng, root2, 1.0)?);
        }
        Ok(Self {
            variant,
            widths,
            one_hot,
            tasks,
            shared_encoder,
            dynamics_encoders,
            task_encoders,
            actor,
            log_std: [INITIAL_LOG_STD; ACTION_DIM],
            critics,
        })
    }

    /// Same structure, every parameter zero. Used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let zero_map = |m: &BTreeMap<TaskId, Mlp>| m.iter().map(|(k, v)| (*k, v.zeros_like())).collect();
        Self {
            variant: self.variant,
            widths: self.widths.clone(),
            one_hot: self.one_hot,
            tasks: self.tasks.clone(),
            shared_encoder: self.shared_encoder.as_ref().map(Mlp::zeros_like),
            dynamics_encoders: zero_map(&self.dynamics_encoders),
            task_encoders: zero_map(&self.task_encoders),
            actor: self.actor.zeros_like(),
            log_std: [0.0; ACTION_DIM],
            critics: zero_map(&self.critics),
        }
    }

    pub fn serves(&self, task: TaskId) -> bool {
        self.task_encoders.contains_key(&task)
    }

    fn check_task(&self, task: TaskId) -> Result<(), NetError> {
        if self.serves(task) {
            Ok(())
        } else {
            Err(NetError::UnknownTask(task))
        }
    }

    fn dynamics_encoder(&self, task: TaskId) -> &Mlp {
        match &self.shared_encoder {
            Some(m) => m,
            None => &self.dynamics_encoders[&task],
        }
    }

    /// Every parameter tensor in a fixed order (shared encoder, dynamics
    /// encoders, task encoders, actor, log-std, critics).
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        if let Some(m) = &self.shared_encoder {
            out.extend(m.tensors());
        }
        for m in self.dynamics_encoders.values() {
            out.extend(m.tensors());
        }
        for m in self.task_encoders.values() {
            out.extend(m.tensors());
        }
        out.extend(self.actor.tensors());
        out.push(&self.log_std[..]);
        for m in self.critics.values() {
            out.extend(m.tensors());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(m) = &mut self.shared_encoder {
            out.extend(m.tensors_mut());
        }
        for m in self.dynamics_encoders.values_mut() {
            out.extend(m.tensors_mut());
        }
        for m in self.task_encoders.values_mut() {
            out.extend(m.tensors_mut());
        }
        out.extend(self.actor.tensors_mut());
        out.push(&mut self.log_std[..]);
        for m in self.critics.values_mut() {
            out.extend(m.tensors_mut());
        }
        out
    }

    /// Number of trailing entries of [`Self::tensors`] that belong to the critics.
    pub fn critic_tensor_count(&self) -> usize {
        self.critics.values().map(|m| m.tensors().len()).sum()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn check_obs(&self, obs: &Observation) -> Result<(), NetError> {
        self.check_task(obs.task)?;
        let expected = obs.task.task_obs_len(self.one_hot);
        if obs.task_specific.len() != expected {
            return Err(NetError::WidthMismatch { expected, got: obs.task_specific.len() });
        }
        Ok(())
    }

    /// Actor input (`2 × embedding` wide) for a single observation.
    pub fn encode(&self, obs: &Observation) -> Result<Vec<f64>, NetError> {
        self.check_obs(obs)?;
        let (shared, task) = single_rows(obs);
        let (e_s, e_t) = self.embed(obs.task, shared.view(), task.view())?;
        Ok(concatenate![Axis(1), e_s, e_t].into_raw_vec_and_offset().0)
    }

    fn embed(
        &self,
        task: TaskId,
        shared: ArrayView2<f64>,
        task_obs: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>), NetError> {
        let e_s = self.dynamics_encoder(task).forward(shared)?;
        let enc = &self.task_encoders[&task];
        let e_t = if self.variant.fuses_shared() {
            enc.forward(concatenate![Axis(1), shared, task_obs].view())?
        } else {
            enc.forward(task_obs)?
        };
        Ok((e_s, e_t))
    }

    /// Mean action in `(-1, 1)⁴` and the log standard deviation.
    pub fn actor_forward(&self, actor_input: &[f64]) -> Result<([f64; ACTION_DIM], [f64; ACTION_DIM]), NetError> {
        let m = self.actor.forward_vec(actor_input)?;
        Ok(([m[0], m[1], m[2], m[3]], self.log_std))
    }

    /// Deterministic action for evaluation.
    pub fn act_mean(&self, obs: &Observation) -> Result<[f64; ACTION_DIM], NetError> {
        let input = self.encode(obs)?;
        Ok(self.actor_forward(&input)?.0)
    }

    pub fn critic_forward(&self, obs: &Observation) -> Result<f64, NetError> {
        self.check_obs(obs)?;
        Ok(self.critics[&obs.task].forward_vec(&obs.full())?[0])
    }

    /// Batched forward pass over rows that all belong to `task`.
    pub fn forward_group(
        &self,
        task: TaskId,
        shared: Array2<f64>,
        task_obs: Array2<f64>,
        with_critic: bool,
    ) -> Result<GroupPass, NetError> {
        self.check_task(task)?;
        let full = concatenate![Axis(1), shared, task_obs];
        let critic = if with_critic { Some(self.critics[&task].forward_tape(full.clone())?) } else { None };
        let enc_t_input = if self.variant.fuses_shared() { full } else { task_obs };
        let enc_s = self.dynamics_encoder(task).forward_tape(shared)?;
        let enc_t = self.task_encoders[&task].forward_tape(enc_t_input)?;
        let actor_in = concatenate![Axis(1), *enc_s.output(), *enc_t.output()];
        let actor = self.actor.forward_tape(actor_in)?;
        Ok(GroupPass { task, enc_s, enc_t, actor, critic })
    }

    /// Back-propagates `d_mean` (gradient w.r.t. the mean action) and
    /// `d_value` (w.r.t. the critic output) into `grads`.
    pub fn backward_group(
        &self,
        pass: &GroupPass,
        d_mean: Option<Array2<f64>>,
        d_value: Option<Array2<f64>>,
        grads: &mut PolicyParams,
    ) {
        let task = pass.task;
        if let Some(d_mean) = d_mean {
            let d_in = self
                .actor
                .backward(&pass.actor, d_mean, &mut grads.actor, true)
                .expect("input gradient requested");
            let e = self.widths.embedding;
            let d_s = d_in.slice(s![.., ..e]).to_owned();
            let d_t = d_in.slice(s![.., e..]).to_owned();
            match (&self.shared_encoder, &mut grads.shared_encoder) {
                (Some(m), Some(g)) => {
                    m.backward(&pass.enc_s, d_s, g, false);
                }
                _ => {
                    let g = grads.dynamics_encoders.get_mut(&task).expect("same structure");
                    self.dynamics_encoders[&task].backward(&pass.enc_s, d_s, g, false);
                }
            }
            let g = grads.task_encoders.get_mut(&task).expect("same structure");
            self.task_encoders[&task].backward(&pass.enc_t, d_t, g, false);
        }
        if let (Some(d_value), Some(tape)) = (d_value, &pass.critic) {
            let g = grads.critics.get_mut(&task).expect("same structure");
            self.critics[&task].backward(tape, d_value, g, false);
        }
    }

    /// Number of distinct parameter sets for each role.
    pub fn parameter_set_counts(&self) -> ParameterSetCounts {
        ParameterSetCounts {
            shared_encoders: usize::from(self.shared_encoder.is_some()),
            dynamics_encoders: self.dynamics_encoders.len(),
            task_encoders: self.task_encoders.len(),
            actors: 1,
            critics: self.critics.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterSetCounts {
    pub shared_encoders: usize,
    pub dynamics_encoders: usize,
    pub task_encoders: usize,
    pub actors: usize,
    pub critics: usize,
}

fn single_rows(obs: &Observation) -> (Array2<f64>, Array2<f64>) {
    let shared = Array2::from_shape_vec((1, SHARED_OBS_LEN), obs.shared.to_vec()).expect("shape");
    let task = Array2::from_shape_vec((1, obs.task_specific.len()), obs.task_specific.clone()).expect("shape");
    (shared, task)
}

/// Recorded forward pass for a batch of one task.
#[derive(Debug, Clone)]
pub struct GroupPass {
    pub task: TaskId,
    enc_s: Tape,
    enc_t: Tape,
    actor: Tape,
    critic: Option<Tape>,
}

impl GroupPass {
    pub fn mean(&self) -> &Array2<f64> {
        self.actor.output()
    }

    /// Critic outputs as an `n × 1` matrix, if the critic was evaluated.
    pub fn value(&self) -> Option<&Array2<f64>> {
        self.critic.as_ref().map(Tape::output)
    }
}

/// Diagonal Gaussian log-density of `u`.
pub fn gaussian_log_prob(u: &[f64; ACTION_DIM], mean: &[f64; ACTION_DIM], log_std: &[f64; ACTION_DIM]) -> f64 {
    (0..ACTION_DIM)
        .map(|i| {
            let z = (u[i] - mean[i]) * (-log_std[i]).exp();
            -0.5 * z * z - log_std[i] - 0.5 * LOG_2PI
        })
        .sum()
}

/// Differential entropy of the diagonal Gaussian.
pub fn gaussian_entropy(log_std: &[f64; ACTION_DIM]) -> f64 {
    log_std.iter().map(|l| 0.5 + 0.5 * LOG_2PI + l).sum()
}

/// `u = mean + σ·ε` and its log-density (before any clipping to the action box).
pub fn sample_action<R: Rng>(
    rng: &mut R,
    mean: &[f64; ACTION_DIM],
    log_std: &[f64; ACTION_DIM],
) -> ([f64; ACTION_DIM], f64) {
    let mut u = [0.0; ACTION_DIM];
    for i in 0..ACTION_DIM {
        let eps: f64 = rng.sample(StandardNormal);
        u[i] = mean[i] + log_std[i].exp() * eps;
    }
    (u, gaussian_log_prob(&u, mean, log_std))
}
