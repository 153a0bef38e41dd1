//! Per-task reward functions. Every function returns its named components;
//! the scalar reward is their sum, accumulated in component order.

use crate::dynamics::QuadState;
use crate::geom::Vec3;
use serde::{Deserialize, Serialize};

use super::track::Track;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reward {
    pub total: f64,
    pub terms: Vec<(&'static str, f64)>,
}

impl Reward {
    pub fn from_terms(terms: Vec<(&'static str, f64)>) -> Self {
        let total = terms.iter().fold(0.0, |acc, (_, v)| acc + v);
        Self { total, terms }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

fn action_change(u_t: &[f64; 4], u_prev: &[f64; 4]) -> f64 {
    u_t.iter().zip(u_prev).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RacingCoeffs {
    pub progress: f64,
    pub perception: f64,
    pub perception_exponent: f64,
    pub action_change: f64,
    pub body_rate: f64,
    pub gate_pass: f64,
    pub crash: f64,
}

impl Default for RacingCoeffs {
    fn default() -> Self {
        Self {
            progress: 0.5,
            perception: 0.025,
            perception_exponent: -1.0,
            action_change: -2e-4,
            body_rate: -5e-4,
            gate_pass: -5.0,
            crash: -10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RacingEvents {
    pub passed: bool,
    pub crashed: bool,
}

/// Angle between the body x-axis (camera optical axis) and the direction to `target`.
pub fn camera_angle(state: &QuadState, target: &Vec3) -> f64 {
    let axis = state.attitude.rotate(&Vec3::x());
    let to = target - state.position;
    let n = to.norm();
    if n == 0.0 {
        return 0.0;
    }
    (axis.dot(&to) / n).clamp(-1.0, 1.0).acos()
}

/// Racing reward. `gate_index` is the gate targeted before this transition and
/// is used for both progress distances; the perception term looks at the gate
/// targeted after it (the next one if this transition passed a gate).
#[allow(clippy::too_many_arguments)]
pub fn racing_reward(
    prev: &QuadState,
    curr: &QuadState,
    u_t: &[f64; 4],
    u_prev: &[f64; 4],
    track: &Track,
    gate_index: usize,
    events: RacingEvents,
    c: &RacingCoeffs,
) -> Reward {
    let target = track.gate(gate_index).center;
    let d_prev = (prev.position - target).norm();
    let d_curr = (curr.position - target).norm();
    let look_at = if events.passed { track.gate(gate_index + 1).center } else { target };
    let delta = camera_angle(curr, &look_at);
    Reward::from_terms(vec![
        ("progress", c.progress * (d_prev - d_curr)),
        ("perception", c.perception * (c.perception_exponent * delta.powi(4)).exp()),
        ("action", c.action_change * action_change(u_t, u_prev)),
        ("body_rate", c.body_rate * curr.body_rates.norm()),
        ("pass", if events.passed { c.gate_pass } else { 0.0 }),
        ("crash", if events.crashed { c.crash } else { 0.0 }),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AttitudeError {
    /// Rotation angle relative to the identity attitude.
    #[default]
    GeodesicAngle,
    /// Angle between body z and world z.
    TiltAngle,
}

impl AttitudeError {
    pub fn measure(&self, state: &QuadState) -> f64 {
        let r = state.rotation();
        match self {
            AttitudeError::GeodesicAngle => r.angle(),
            AttitudeError::TiltAngle => r.tilt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizationCoeffs {
    pub height: f64,
    pub attitude: f64,
    pub velocity: f64,
    pub body_rate: f64,
    pub action_change: f64,
    pub success: f64,
}

impl Default for StabilizationCoeffs {
    fn default() -> Self {
        Self {
            height: -2e-3,
            attitude: -2e-4,
            velocity: -4e-5,
            body_rate: -1e-5,
            action_change: -1e-4,
            success: 10.0,
        }
    }
}

pub fn stabilization_reward(
    state: &QuadState,
    u_t: &[f64; 4],
    u_prev: &[f64; 4],
    z_d: f64,
    hovering: bool,
    attitude: AttitudeError,
    c: &StabilizationCoeffs,
) -> Reward {
    Reward::from_terms(vec![
        ("height", c.height * (state.position.z - z_d).abs()),
        ("attitude", c.attitude * attitude.measure(state)),
        ("velocity", c.velocity * state.velocity.norm()),
        ("body_rate", c.body_rate * state.body_rates.norm()),
        ("action", c.action_change * action_change(u_t, u_prev)),
        ("success", if hovering { c.success } else { 0.0 }),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingCoeffs {
    pub velocity: f64,
    pub body_rate: f64,
    pub action_change: f64,
}

impl Default for TrackingCoeffs {
    fn default() -> Self {
        Self { velocity: -2e-4, body_rate: -1.2e-3, action_change: -1e-4 }
    }
}

pub fn tracking_reward(state: &QuadState, u_t: &[f64; 4], u_prev: &[f64; 4], v_d: &Vec3, c: &TrackingCoeffs) -> Reward {
    Reward::from_terms(vec![
        ("velocity", c.velocity * (state.velocity - v_d).norm()),
        ("body_rate", c.body_rate * state.body_rates.norm()),
        ("action", c.action_change * action_change(u_t, u_prev)),
    ])
}
