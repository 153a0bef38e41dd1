//! Running observation normalisation.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::tasks::{Observation, TaskId, SHARED_OBS_LEN};

const VAR_EPS: f64 = 1e-8;

/// Per-dimension running mean and variance, merged batch-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStat {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl RunningStat {
    pub fn new(dim: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Variance, or 1 before any data has been seen.
    pub fn var(&self, i: usize) -> f64 {
        if self.count < 1.0 {
            1.0
        } else {
            self.m2[i] / self.count
        }
    }

    /// Merges a batch of rows with the parallel-variance formula.
    pub fn update<'a, I: IntoIterator<Item = &'a [f64]>>(&mut self, rows: I) {
        let mut batch = RunningStat::new(self.dim());
        for row in rows {
            batch.count += 1.0;
            for (i, &x) in row.iter().enumerate() {
                let d = x - batch.mean[i];
                batch.mean[i] += d / batch.count;
                batch.m2[i] += d * (x - batch.mean[i]);
            }
        }
        if batch.count == 0.0 {
            return;
        }
        let n = self.count + batch.count;
        for i in 0..self.dim() {
            let delta = batch.mean[i] - self.mean[i];
            self.mean[i] += delta * batch.count / n;
            self.m2[i] += batch.m2[i] + delta * delta * self.count * batch.count / n;
        }
        self.count = n;
    }

    pub fn normalize(&self, x: &[f64], clip: f64, out: &mut [f64]) {
        for i in 0..x.len() {
            let z = (x[i] - self.mean[i]) / (self.var(i) + VAR_EPS).sqrt();
            out[i] = z.clamp(-clip, clip);
        }
    }
}

/// Statistics for the shared block are pooled over every task; the
/// task-specific block keeps one set per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub enabled: bool,
    pub clip: f64,
    pub shared: RunningStat,
    pub task: BTreeMap<TaskId, RunningStat>,
}

impl ObsNormalizer {
    pub fn new(tasks: &[TaskId], one_hot: bool, enabled: bool, clip: f64) -> Self {
        Self {
            enabled,
            clip,
            shared: RunningStat::new(SHARED_OBS_LEN),
            task: tasks.iter().map(|&t| (t, RunningStat::new(t.task_obs_len(one_hot)))).collect(),
        }
    }

    pub fn update(&mut self, batch: &[Observation]) {
        if !self.enabled {
            return;
        }
        self.shared.update(batch.iter().map(|o| &o.shared[..]));
        for (task, stat) in self.task.iter_mut() {
            stat.update(batch.iter().filter(|o| o.task == *task).map(|o| o.task_specific.as_slice()));
        }
    }

    /// Normalised copy of `obs`; identity when disabled.
    pub fn apply(&self, obs: &Observation) -> Observation {
        if !self.enabled {
            return obs.clone();
        }
        let mut shared = [0.0; SHARED_OBS_LEN];
        self.shared.normalize(&obs.shared, self.clip, &mut shared);
        let mut task_specific = obs.task_specific.clone();
        if let Some(stat) = self.task.get(&obs.task) {
            stat.normalize(&obs.task_specific, self.clip, &mut task_specific);
        }
        Observation { shared, task_specific, task: obs.task }
    }
}
