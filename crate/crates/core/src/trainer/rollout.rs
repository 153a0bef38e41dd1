//! Synchronous rollout collection over a set of environments.

use ndarray::Array2;
use rand::Rng;
use std::collections::BTreeMap;

use super::{compute_gae, TrainConfig, TrainError};
use crate::nets::{sample_action, ObsNormalizer, PolicyParams, ACTION_DIM};
use crate::tasks::{
    curriculum_update, CurriculumState, Env, EnvConfig, Observation, TaskId, TerminationReason, SHARED_OBS_LEN,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Normalised observation the action was chosen from.
    pub obs: Observation,
    pub u: [f64; ACTION_DIM],
    pub log_prob: f64,
    /// Includes the discounted bootstrap value on a timeout step.
    pub reward: f64,
    pub value: f64,
    pub terminated: bool,
    pub task: TaskId,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer {
    pub per_env: Vec<Vec<Transition>>,
    /// Value of the observation after each env's last transition.
    pub bootstrap: Vec<f64>,
    pub advantages: Vec<Vec<f64>>,
    pub returns: Vec<Vec<f64>>,
    pub task_counts: BTreeMap<TaskId, usize>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.per_env.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fills `advantages` and `returns` segment by segment.
    pub fn compute_advantages(&mut self, cfg: &TrainConfig) -> Result<(), TrainError> {
        self.advantages.clear();
        self.returns.clear();
        for (k, seg) in self.per_env.iter().enumerate() {
            let Some(first) = seg.first() else {
                self.advantages.push(Vec::new());
                self.returns.push(Vec::new());
                continue;
            };
            let rewards: Vec<f64> = seg.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = seg.iter().map(|t| t.value).collect();
            let dones: Vec<bool> = seg.iter().map(|t| t.terminated).collect();
            let (a, r) =
                compute_gae(&rewards, &values, &dones, self.bootstrap[k], cfg.gamma_for(first.task), cfg.gae_lambda)?;
            self.advantages.push(a);
            self.returns.push(r);
        }
        Ok(())
    }
}

/// Completed episode, stamped with the cumulative sample count at its end.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpisodeRecord {
    pub samples: u64,
    pub task: TaskId,
    pub episode_return: f64,
    pub length: u64,
    pub reason: TerminationReason,
}

/// Mutable training-side state touched during collection.
pub struct Collector<'a, R: Rng> {
    pub envs: &'a mut [Env],
    pub env_cfg: &'a EnvConfig,
    pub normalizer: &'a mut ObsNormalizer,
    pub curricula: &'a mut BTreeMap<TaskId, CurriculumState>,
    pub rng: &'a mut R,
    pub samples: &'a mut u64,
    pub episodes: &'a mut Vec<EpisodeRecord>,
}

pub(crate) fn stack(obs: &[&Observation]) -> (Array2<f64>, Array2<f64>) {
    let n = obs.len();
    let width = obs.first().map_or(0, |o| o.task_specific.len());
    let mut shared = Array2::zeros((n, SHARED_OBS_LEN));
    let mut task = Array2::zeros((n, width));
    for (r, o) in obs.iter().enumerate() {
        shared.row_mut(r).iter_mut().zip(&o.shared).for_each(|(d, s)| *d = *s);
        task.row_mut(r).iter_mut().zip(&o.task_specific).for_each(|(d, s)| *d = *s);
    }
    (shared, task)
}

/// Steps every environment `cfg.rollout_length` times with actions sampled
/// from `policy`. Environments must be live on entry and are left live.
pub fn collect_rollouts<R: Rng>(
    policy: &PolicyParams,
    c: &mut Collector<'_, R>,
    cfg: &TrainConfig,
) -> Result<RolloutBuffer, TrainError> {
    let n_envs = c.envs.len();
    let mut groups: BTreeMap<TaskId, Vec<usize>> = BTreeMap::new();
    for (k, e) in c.envs.iter().enumerate() {
        groups.entry(e.task()).or_default().push(k);
    }
    let mut buf = RolloutBuffer { per_env: vec![Vec::with_capacity(cfg.rollout_length); n_envs], ..Default::default() };
    let mut raw: Vec<Observation> = c.envs.iter().map(|e| e.observe(c.env_cfg)).collect();

    for _ in 0..cfg.rollout_length {
        c.normalizer.update(&raw);
        let normed: Vec<Observation> = raw.iter().map(|o| c.normalizer.apply(o)).collect();
        let mut means = vec![[0.0; ACTION_DIM]; n_envs];
        let mut values = vec![0.0; n_envs];
        for (&task, idx) in &groups {
            let rows: Vec<&Observation> = idx.iter().map(|&k| &normed[k]).collect();
            let (sh, ts) = stack(&rows);
            let pass = policy.forward_group(task, sh, ts, true)?;
            let (mean, value) = (pass.mean(), pass.value().expect("critic evaluated"));
            for (r, &k) in idx.iter().enumerate() {
                for i in 0..ACTION_DIM {
                    means[k][i] = mean[(r, i)];
                }
                values[k] = value[(r, 0)];
            }
        }
        for (k, obs) in normed.into_iter().enumerate() {
            let (u, log_prob) = sample_action(c.rng, &means[k], &policy.log_std);
            let env = &mut c.envs[k];
            let task = env.task();
            let step = env.step(c.env_cfg, &u).map_err(|e| TrainError::Env { env: k, task, source: e })?;
            let mut reward = step.reward;
            if step.termination_reason == TerminationReason::Timeout {
                let last = c.normalizer.apply(&step.observation);
                reward += cfg.gamma_for(task) * policy.critic_forward(&last)?;
            }
            *c.samples += 1;
            if let Some(ep) = step.episode {
                c.episodes.push(EpisodeRecord {
                    samples: *c.samples,
                    task,
                    episode_return: ep.episode_return,
                    length: ep.length,
                    reason: ep.reason,
                });
            }
            buf.per_env[k].push(Transition {
                obs,
                u,
                log_prob,
                reward,
                value: values[k],
                terminated: step.terminated,
                task,
            });
            raw[k] = step.observation;
            *buf.task_counts.entry(task).or_default() += 1;
        }
        for (&task, idx) in &groups {
            let cur = &c.curricula[&task];
            let next = curriculum_update(cur, idx.len() as u64, task, &c.env_cfg.curriculum);
            c.curricula.insert(task, next);
        }
        for (k, env) in c.envs.iter_mut().enumerate() {
            if env.is_done() {
                raw[k] = env.reset(c.env_cfg, &c.curricula[&env.task()]);
            }
        }
    }

    buf.bootstrap = vec![0.0; n_envs];
    for (k, o) in raw.iter().enumerate() {
        buf.bootstrap[k] = policy.critic_forward(&c.normalizer.apply(o))?;
    }
    Ok(buf)
}
