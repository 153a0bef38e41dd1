//! Clipped-surrogate update with per-task critics.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::rollout::{stack, RolloutBuffer};
use super::{Adam, TrainConfig, TrainError};
use crate::nets::{gaussian_entropy, gaussian_log_prob, PolicyParams, ACTION_DIM, MIN_LOG_STD};
use crate::tasks::{Observation, TaskId};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: BTreeMap<TaskId, f64>,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Mean gradient norm of the policy side (encoders, actor, log-std) before clipping.
    pub grad_norm: f64,
    /// Mean gradient norm of the critics before clipping.
    pub value_grad_norm: f64,
    pub minibatches: usize,
}

/// Loss terms and gradient of one minibatch. `grads` is overwritten.
pub struct MinibatchLoss {
    pub policy_loss: f64,
    pub value_sq_err: BTreeMap<TaskId, (f64, usize)>,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub total: f64,
}

pub struct Sample<'a> {
    pub obs: &'a Observation,
    pub u: &'a [f64; ACTION_DIM],
    pub log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

fn zero(grads: &mut PolicyParams) {
    for t in grads.tensors_mut() {
        t.fill(0.0);
    }
}

/// Loss `−L_clip + c_v·MSE − c_e·H` averaged over the minibatch, and its
/// gradient accumulated into `grads`.
pub fn minibatch_loss(
    policy: &PolicyParams,
    batch: &[Sample<'_>],
    cfg: &TrainConfig,
    grads: &mut PolicyParams,
) -> Result<MinibatchLoss, TrainError> {
    zero(grads);
    let n = batch.len() as f64;
    let log_std = policy.log_std;
    let inv_var = log_std.map(|l| (-2.0 * l).exp());
    let mut surrogate = 0.0;
    let mut kl = 0.0;
    let mut clipped = 0usize;
    let mut value_sq_err = BTreeMap::new();
    let mut value_loss = 0.0;

    let mut groups: BTreeMap<TaskId, Vec<usize>> = BTreeMap::new();
    for (i, s) in batch.iter().enumerate() {
        groups.entry(s.obs.task).or_default().push(i);
    }
    for (&task, idx) in &groups {
        let rows: Vec<&Observation> = idx.iter().map(|&i| batch[i].obs).collect();
        let (sh, ts) = stack(&rows);
        let pass = policy.forward_group(task, sh, ts, true)?;
        let mean = pass.mean();
        let value = pass.value().expect("critic evaluated");
        let mut d_mean = Array2::zeros((idx.len(), ACTION_DIM));
        let mut d_value = Array2::zeros((idx.len(), 1));
        let mut sq = 0.0;
        for (r, &i) in idx.iter().enumerate() {
            let s = &batch[i];
            let mu: [f64; ACTION_DIM] = std::array::from_fn(|j| mean[(r, j)]);
            let logp = gaussian_log_prob(s.u, &mu, &log_std);
            let ratio = (logp - s.log_prob).exp();
            let unclipped = ratio * s.advantage;
            let clip = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * s.advantage;
            surrogate += unclipped.min(clip);
            kl += s.log_prob - logp;
            if (ratio - 1.0).abs() > cfg.clip {
                clipped += 1;
            }
            // d(−min)/d logp; zero where the clipped branch is active.
            let g_logp = if unclipped <= clip { -unclipped / n } else { 0.0 };
            for j in 0..ACTION_DIM {
                let diff = s.u[j] - mu[j];
                d_mean[(r, j)] = g_logp * diff * inv_var[j];
                grads.log_std[j] += g_logp * (diff * diff * inv_var[j] - 1.0);
            }
            let err = value[(r, 0)] - s.ret;
            sq += err * err;
            d_value[(r, 0)] = 2.0 * cfg.value_coeff * err / n;
        }
        value_loss += sq;
        value_sq_err.insert(task, (sq, idx.len()));
        policy.backward_group(&pass, Some(d_mean), Some(d_value), grads);
    }
    for g in grads.log_std.iter_mut() {
        *g -= cfg.entropy_coeff;
    }
    let entropy = gaussian_entropy(&log_std);
    let policy_loss = -surrogate / n;
    let total = policy_loss + cfg.value_coeff * value_loss / n - cfg.entropy_coeff * entropy;
    Ok(MinibatchLoss {
        policy_loss,
        value_sq_err,
        entropy,
        approx_kl: kl / n,
        clip_fraction: clipped as f64 / n,
        total,
    })
}

/// Global L2 norm of all gradient tensors.
pub fn grad_norm(grads: &PolicyParams) -> f64 {
    norm_of(&grads.tensors())
}

fn norm_of(tensors: &[&[f64]]) -> f64 {
    tensors.iter().flat_map(|t| t.iter()).map(|g| g * g).sum::<f64>().sqrt()
}

/// Clips the policy-side and critic gradients to `max_norm` independently.
/// The critics share no parameters with the actor, and a joint norm lets
/// large value errors shrink the policy step. Returns both norms before clipping.
pub fn clip_grad_norms(grads: &mut PolicyParams, max_norm: f64) -> (f64, f64) {
    let split = grads.tensors().len() - grads.critic_tensor_count();
    let (policy_norm, value_norm) = {
        let t = grads.tensors();
        (norm_of(&t[..split]), norm_of(&t[split..]))
    };
    let scales = [policy_norm, value_norm].map(|n| if n > max_norm { max_norm / (n + 1e-6) } else { 1.0 });
    for (i, g) in grads.tensors_mut().into_iter().enumerate() {
        let s = scales[usize::from(i >= split)];
        if s != 1.0 {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }
    (policy_norm, value_norm)
}

/// `cfg.epochs` passes of shuffled minibatches over the buffer.
pub fn ppo_update<R: Rng>(
    policy: &mut PolicyParams,
    adam: &mut Adam,
    buffer: &RolloutBuffer,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<UpdateStats, TrainError> {
    let mut index: Vec<(usize, usize)> = buffer
        .per_env
        .iter()
        .enumerate()
        .flat_map(|(k, seg)| (0..seg.len()).map(move |t| (k, t)))
        .collect();
    let mut grads = policy.zeros_like();
    let mut stats = UpdateStats::default();
    let mut value_acc: BTreeMap<TaskId, (f64, usize)> = BTreeMap::new();
    let mb = cfg.minibatch_size.max(1);
    for _ in 0..cfg.epochs {
        index.shuffle(rng);
        for chunk in index.chunks(mb) {
            let mut adv: Vec<f64> = chunk.iter().map(|&(k, t)| buffer.advantages[k][t]).collect();
            if cfg.normalize_advantages && adv.len() > 1 {
                let m = adv.iter().sum::<f64>() / adv.len() as f64;
                let var = adv.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / adv.len() as f64;
                let sd = var.sqrt() + 1e-8;
                adv.iter_mut().for_each(|a| *a = (*a - m) / sd);
            }
            let batch: Vec<Sample<'_>> = chunk
                .iter()
                .zip(&adv)
                .map(|(&(k, t), &a)| {
                    let tr = &buffer.per_env[k][t];
                    Sample { obs: &tr.obs, u: &tr.u, log_prob: tr.log_prob, advantage: a, ret: buffer.returns[k][t] }
                })
                .collect();
            let loss = minibatch_loss(policy, &batch, cfg, &mut grads)?;
            let norm = grad_norm(&grads);
            if !loss.total.is_finite() || !norm.is_finite() {
                return Err(TrainError::NonFiniteLoss { loss: loss.total, grad_norm: norm });
            }
            let (policy_norm, value_norm) = clip_grad_norms(&mut grads, cfg.max_grad_norm);
            adam.update(policy.tensors_mut(), grads.tensors(), cfg.learning_rate);
            for l in policy.log_std.iter_mut() {
                *l = l.max(MIN_LOG_STD);
            }
            stats.policy_loss += loss.policy_loss;
            stats.entropy += loss.entropy;
            stats.approx_kl += loss.approx_kl;
            stats.clip_fraction += loss.clip_fraction;
            stats.grad_norm += policy_norm;
            stats.value_grad_norm += value_norm;
            stats.minibatches += 1;
            for (task, (sq, cnt)) in loss.value_sq_err {
                let e = value_acc.entry(task).or_default();
                e.0 += sq;
                e.1 += cnt;
            }
        }
    }
    if stats.minibatches > 0 {
        let n = stats.minibatches as f64;
        stats.policy_loss /= n;
        stats.entropy /= n;
        stats.approx_kl /= n;
        stats.clip_fraction /= n;
        stats.grad_norm /= n;
        stats.value_grad_norm /= n;
    }
    stats.value_loss = value_acc.into_iter().map(|(t, (sq, c))| (t, sq / c.max(1) as f64)).collect();
    Ok(stats)
}
