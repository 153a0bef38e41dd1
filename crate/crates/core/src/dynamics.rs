//! Rigid-body quadrotor simulator with motor lag and a body-rate inner loop.
//!
//! World frame is z-up; body frame is x-forward, y-left, z-up. Motors sit in
//! an X configuration, numbered
//!
//! ```text
//!   2 (front-left, cw)    0 (front-right, ccw)
//!            \           /
//!                 [B]
//!            /           \
//!   1 (rear-left, ccw)    3 (rear-right, cw)
//! ```
//!
//! Counter-clockwise rotors produce a positive yaw reaction torque `κ·c`.

use crate::geom::{self, quat_derivative, quat_normalize, quat_to_rotmat_unchecked, Quaternion, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("state contains non-finite values")]
    NonFiniteState,
    #[error("control period {dt_ctrl} is not a multiple of the physics step {dt_phys}")]
    StepMismatch { dt_ctrl: f64, dt_phys: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Geom(#[from] geom::GeomError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadParams {
    /// kg
    pub mass: f64,
    /// Diagonal inertia, kg·m².
    pub inertia: [f64; 3],
    /// Motor distance from the centre, m.
    pub arm_length: f64,
    /// N, summed over all four motors.
    pub max_total_thrust: f64,
    /// Nominal value of the reference platform; not used by the simulator.
    pub thrust_to_weight: f64,
    /// s
    pub motor_time_constant: f64,
    /// Yaw torque per unit motor thrust, m.
    pub torque_coeff: f64,
    /// m/s²
    pub gravity: f64,
    /// rad/s
    pub body_rate_limits: [f64; 3],
    /// 1/s
    pub rate_controller_gains: [f64; 3],
    /// Physics sub-step, s.
    pub dt_physics: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            mass: 0.6,
            inertia: [2.50e-3, 2.51e-3, 4.32e-3],
            arm_length: 0.15,
            max_total_thrust: 20.0,
            thrust_to_weight: 5.78,
            motor_time_constant: 0.033,
            torque_coeff: 0.016,
            gravity: 9.81,
            body_rate_limits: [10.0, 10.0, 4.0],
            rate_controller_gains: [20.0, 20.0, 8.0],
            dt_physics: 1.0 / 500.0,
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |msg: &str| Err(DynamicsError::InvalidParams(msg.to_string()));
        if !(self.mass > 0.0) {
            return bad("mass must be positive");
        }
        if self.inertia.iter().any(|j| !(*j > 0.0)) {
            return bad("inertia components must be positive");
        }
        if !(self.max_total_thrust >= self.mass * self.gravity) {
            return bad("max_total_thrust must be at least the hover thrust");
        }
        if !(self.arm_length > 0.0) || !(self.torque_coeff > 0.0) {
            return bad("arm_length and torque_coeff must be positive");
        }
        if !(self.motor_time_constant > 0.0) || !(self.dt_physics > 0.0) {
            return bad("motor_time_constant and dt_physics must be positive");
        }
        if self.body_rate_limits.iter().any(|l| !(*l > 0.0)) {
            return bad("body_rate_limits must be positive");
        }
        Ok(())
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn max_motor_thrust(&self) -> f64 {
        self.max_total_thrust / 4.0
    }

    fn inertia_vec(&self) -> Vec3 {
        Vec3::from(self.inertia)
    }

    /// Motor offset along each body axis, `arm_length / √2`.
    fn half_span(&self) -> f64 {
        self.arm_length * std::f64::consts::FRAC_1_SQRT_2
    }

    /// Raw policy output that commands exactly the hover thrust and zero rates.
    pub fn hover_policy_output(&self) -> [f64; 4] {
        [2.0 * self.hover_thrust() / self.max_total_thrust - 1.0, 0.0, 0.0, 0.0]
    }
}

/// Body-frame motor positions `(x, y)` in units of [`QuadParams::half_span`].
const MOTOR_XY: [(f64, f64); 4] = [(1.0, -1.0), (-1.0, 1.0), (1.0, 1.0), (-1.0, -1.0)];
const MOTOR_SPIN: [f64; 4] = [1.0, 1.0, -1.0, -1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    pub position: Vec3,
    pub attitude: Quaternion,
    pub velocity: Vec3,
    pub body_rates: Vec3,
    pub motor_thrusts: [f64; 4],
}

impl QuadState {
    /// Level, at rest, motors spinning at hover thrust.
    pub fn hover_at(position: Vec3, params: &QuadParams) -> Self {
        Self {
            position,
            attitude: Quaternion::IDENTITY,
            velocity: Vec3::zeros(),
            body_rates: Vec3::zeros(),
            motor_thrusts: [params.hover_thrust() / 4.0; 4],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.attitude.is_finite()
            && self.velocity.iter().all(|v| v.is_finite())
            && self.body_rates.iter().all(|v| v.is_finite())
            && self.motor_thrusts.iter().all(|v| v.is_finite())
    }

    pub fn rotation(&self) -> geom::RotMat {
        quat_to_rotmat_unchecked(&self.attitude)
    }

    pub fn collective_thrust(&self) -> f64 {
        self.motor_thrusts.iter().sum()
    }

    /// World-frame acceleration produced by the current motor thrusts and gravity.
    pub fn acceleration(&self, params: &QuadParams) -> Vec3 {
        let thrust = self.attitude.rotate(&Vec3::new(0.0, 0.0, self.collective_thrust()));
        thrust / params.mass - Vec3::new(0.0, 0.0, params.gravity)
    }

    fn to_array(&self) -> [f64; 13] {
        let q = self.attitude.as_array();
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q[0],
            q[1],
            q[2],
            q[3],
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
            self.body_rates.x,
            self.body_rates.y,
            self.body_rates.z,
        ]
    }

    fn from_array(x: &[f64; 13], motor_thrusts: [f64; 4]) -> Self {
        Self {
            position: Vec3::new(x[0], x[1], x[2]),
            attitude: Quaternion::new(x[3], x[4], x[5], x[6]),
            velocity: Vec3::new(x[7], x[8], x[9]),
            body_rates: Vec3::new(x[10], x[11], x[12]),
            motor_thrusts,
        }
    }
}

/// Collective thrust and body-rate setpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// N
    pub collective_thrust: f64,
    /// rad/s
    pub body_rates: Vec3,
}

/// Saturation counters. Never affect the simulation result.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub clamped_actions: u64,
    pub saturated_allocations: u64,
}

/// Affine map from the policy's `[-1, 1]⁴` output to a physical setpoint.
/// Out-of-range components are clamped and counted.
pub fn action_from_policy_output(u: &[f64; 4], params: &QuadParams, diag: &mut Diagnostics) -> Action {
    let mut c = *u;
    let mut clamped = false;
    for v in c.iter_mut() {
        let x = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        clamped |= x != *v;
        *v = x;
    }
    if clamped {
        diag.clamped_actions += 1;
    }
    let lim = params.body_rate_limits;
    Action {
        collective_thrust: 0.5 * (c[0] + 1.0) * params.max_total_thrust,
        body_rates: Vec3::new(c[1] * lim[0], c[2] * lim[1], c[3] * lim[2]),
    }
}

/// Per-motor thrusts for collective thrust `c` and body torque `tau` (no limits).
fn mix(c: f64, tau: &Vec3, params: &QuadParams) -> [f64; 4] {
    let d = params.half_span();
    let mut out = [0.0; 4];
    for (i, o) in out.iter_mut().enumerate() {
        let (x, y) = MOTOR_XY[i];
        *o = c / 4.0 + tau.x * y / (4.0 * d) - tau.y * x / (4.0 * d)
            + tau.z * MOTOR_SPIN[i] / (4.0 * params.torque_coeff);
    }
    out
}

/// Collective thrust and body torque produced by the given motor thrusts.
pub fn thrust_and_torque(motors: &[f64; 4], params: &QuadParams) -> (f64, Vec3) {
    let d = params.half_span();
    let mut tau = Vec3::zeros();
    let mut c = 0.0;
    for (i, &f) in motors.iter().enumerate() {
        let (x, y) = MOTOR_XY[i];
        c += f;
        tau.x += y * d * f;
        tau.y -= x * d * f;
        tau.z += MOTOR_SPIN[i] * params.torque_coeff * f;
    }
    (c, tau)
}

/// Largest `k ∈ [0, 1]` with `base + k·delta` inside `[0, max]` component-wise,
/// assuming `base` is already inside.
fn feasible_fraction(base: &[f64; 4], delta: &[f64; 4], max: f64) -> f64 {
    let mut k: f64 = 1.0;
    for i in 0..4 {
        let end = base[i] + delta[i];
        if end > max {
            k = k.min((max - base[i]) / delta[i]);
        } else if end < 0.0 {
            k = k.min(-base[i] / delta[i]);
        }
    }
    k.clamp(0.0, 1.0)
}

fn inside(m: &[f64; 4], max: f64) -> bool {
    m.iter().all(|&f| (0.0..=max).contains(&f))
}

/// Proportional body-rate controller with gyroscopic feed-forward and X-mixer
/// allocation. Under saturation, collective thrust is kept first, then
/// roll/pitch torque, then yaw torque.
pub fn rate_controller(state: &QuadState, action: &Action, params: &QuadParams, diag: &mut Diagnostics) -> [f64; 4] {
    let j = params.inertia_vec();
    let k = Vec3::from(params.rate_controller_gains);
    let w = state.body_rates;
    let rate_err = action.body_rates - w;
    let tau = j.component_mul(&k.component_mul(&rate_err)) + w.cross(&j.component_mul(&w));

    let max = params.max_motor_thrust();
    let c = action.collective_thrust.clamp(0.0, params.max_total_thrust);
    let full = mix(c, &tau, params);
    if inside(&full, max) {
        return full;
    }
    diag.saturated_allocations += 1;

    let base = [c / 4.0; 4];
    let rp = mix(0.0, &Vec3::new(tau.x, tau.y, 0.0), params);
    let yaw = mix(0.0, &Vec3::new(0.0, 0.0, tau.z), params);
    let k_rp = feasible_fraction(&base, &rp, max);
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = base[i] + k_rp * rp[i];
    }
    if k_rp >= 1.0 {
        let k_yaw = feasible_fraction(&out, &yaw, max);
        for i in 0..4 {
            out[i] += k_yaw * yaw[i];
        }
    }
    out.map(|f| f.clamp(0.0, max))
}

/// Time derivative of `[p, q, v, ω]` with the motor thrusts held fixed.
pub fn dynamics_derivative(state: &QuadState, params: &QuadParams) -> Result<[f64; 13], DynamicsError> {
    if !state.is_finite() {
        return Err(DynamicsError::NonFiniteState);
    }
    Ok(derivative(&state.to_array(), &state.motor_thrusts, params))
}

fn derivative(x: &[f64; 13], motors: &[f64; 4], params: &QuadParams) -> [f64; 13] {
    let q = Quaternion::new(x[3], x[4], x[5], x[6]);
    let w = Vec3::new(x[10], x[11], x[12]);
    let (c, tau) = thrust_and_torque(motors, params);
    let qd = quat_derivative(&q, &w);
    let acc = q.rotate(&Vec3::new(0.0, 0.0, c)) / params.mass - Vec3::new(0.0, 0.0, params.gravity);
    let j = params.inertia_vec();
    let wd = (tau - w.cross(&j.component_mul(&w))).component_div(&j);
    [
        x[7], x[8], x[9], qd[0], qd[1], qd[2], qd[3], acc.x, acc.y, acc.z, wd.x, wd.y, wd.z,
    ]
}

/// One RK4 sub-step of the rigid body with the current motor thrusts held
/// fixed, followed by quaternion renormalisation.
pub fn integrate_rigid_body(state: &QuadState, dt: f64, params: &QuadParams) -> Result<QuadState, DynamicsError> {
    if !state.is_finite() {
        return Err(DynamicsError::NonFiniteState);
    }
    let motors = state.motor_thrusts;
    let x = geom::rk4_step(|x| derivative(x, &motors, params), &state.to_array(), dt)?;
    let mut next = QuadState::from_array(&x, motors);
    next.attitude = quat_normalize(&next.attitude)?;
    if !next.is_finite() {
        return Err(DynamicsError::NonFiniteState);
    }
    Ok(next)
}

/// Number of physics sub-steps in one control period.
pub fn substeps(dt_ctrl: f64, params: &QuadParams) -> Result<usize, DynamicsError> {
    let n = (dt_ctrl / params.dt_physics).round();
    if n < 1.0 || (n * params.dt_physics - dt_ctrl).abs() > 1e-9 {
        return Err(DynamicsError::StepMismatch { dt_ctrl, dt_phys: params.dt_physics });
    }
    Ok(n as usize)
}

/// Advances one control period: per sub-step the rate controller produces motor
/// commands, the motors follow them through an exact first-order lag, and the
/// rigid body is integrated with RK4.
pub fn step(
    state: &QuadState,
    action: &Action,
    dt_ctrl: f64,
    params: &QuadParams,
    diag: &mut Diagnostics,
) -> Result<QuadState, DynamicsError> {
    let n = substeps(dt_ctrl, params)?;
    let dt = params.dt_physics;
    let decay = (-dt / params.motor_time_constant).exp();
    let mut s = state.clone();
    for _ in 0..n {
        let cmd = rate_controller(&s, action, params, diag);
        for (m, c) in s.motor_thrusts.iter_mut().zip(cmd) {
            *m = c + (*m - c) * decay;
        }
        s = integrate_rigid_body(&s, dt, params)?;
    }
    Ok(s)
}
