//! Desired-velocity profiles for the tracking task.

use crate::geom::Vec3;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A random walk in acceleration space. `desired[k]` is the clamped reference
/// at control step `k`; `unclamped[k]` integrates the same accelerations
/// without clamping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfile {
    pub dt: f64,
    pub accelerations: Vec<[f64; 3]>,
    pub unclamped: Vec<[f64; 3]>,
    pub desired: Vec<[f64; 3]>,
}

impl VelocityProfile {
    /// Reference at step `k`, holding the last value past the end.
    pub fn at(&self, k: usize) -> Vec3 {
        Vec3::from(self.desired[k.min(self.desired.len() - 1)])
    }
}

/// `steps` acceleration draws `a_k ~ U(-max_accel, max_accel)` per axis;
/// `v(k+1) = clamp(v(k) + a_k·dt, ±bounds)`.
pub fn sample_velocity_profile<R: Rng>(
    rng: &mut R,
    bounds: [f64; 3],
    max_accel: f64,
    initial: [f64; 3],
    steps: usize,
    dt: f64,
) -> VelocityProfile {
    let clamp = |v: [f64; 3]| [0, 1, 2].map(|i| v[i].clamp(-bounds[i], bounds[i]));
    let mut accelerations = Vec::with_capacity(steps);
    let mut unclamped = Vec::with_capacity(steps + 1);
    let mut desired = Vec::with_capacity(steps + 1);
    let mut raw = initial;
    let mut v = clamp(initial);
    unclamped.push(raw);
    desired.push(v);
    for _ in 0..steps {
        let a = [0, 1, 2].map(|_| max_accel * (2.0 * rng.random::<f64>() - 1.0));
        for i in 0..3 {
            raw[i] += a[i] * dt;
            v[i] += a[i] * dt;
        }
        v = clamp(v);
        accelerations.push(a);
        unclamped.push(raw);
        desired.push(v);
    }
    VelocityProfile { dt, accelerations, unclamped, desired }
}
