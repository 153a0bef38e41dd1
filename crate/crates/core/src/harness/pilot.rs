//! Closed-loop controllers: the learned policy and scripted references.

use nalgebra::Matrix3;

use crate::dynamics::{QuadParams, QuadState};
use crate::geom::Vec3;
use crate::nets::PolicyCheckpoint;
use crate::tasks::{Env, EnvConfig, Observation, Track};

/// Produces the raw policy output `u ∈ [-1, 1]⁴` for the current step.
pub trait Pilot {
    /// Called after every environment reset.
    fn reset(&mut self, _env: &Env, _cfg: &EnvConfig) {}

    fn act(&mut self, env: &Env, cfg: &EnvConfig, obs: &Observation) -> [f64; 4];
}

/// Deterministic mean action of a trained policy with frozen statistics.
pub struct PolicyPilot {
    pub checkpoint: PolicyCheckpoint,
}

impl Pilot for PolicyPilot {
    fn act(&mut self, _env: &Env, _cfg: &EnvConfig, obs: &Observation) -> [f64; 4] {
        let normed = self.checkpoint.normalizer.apply(obs);
        self.checkpoint.params.act_mean(&normed).expect("policy serves the evaluated task")
    }
}

/// Replays one fixed output.
pub struct ConstantPilot(pub [f64; 4]);

impl Pilot for ConstantPilot {
    fn act(&mut self, _env: &Env, _cfg: &EnvConfig, _obs: &Observation) -> [f64; 4] {
        self.0
    }
}

fn vee(m: &Matrix3<f64>) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Maps a desired world acceleration and heading to collective thrust and body
/// rates through a geometric attitude law.
#[derive(Debug, Clone, Copy)]
pub struct AccelerationTracker {
    pub attitude_gain: f64,
    pub yaw_gain: f64,
    /// Largest commanded tilt of the thrust vector, rad.
    pub max_tilt: f64,
}

impl Default for AccelerationTracker {
    fn default() -> Self {
        Self { attitude_gain: 8.0, yaw_gain: 3.0, max_tilt: 1.2 }
    }
}

impl AccelerationTracker {
    /// `heading` is the desired direction of the body x-axis; only its
    /// horizontal part is used. `None` keeps the current heading.
    pub fn command(&self, state: &QuadState, a_des: Vec3, heading: Option<Vec3>, params: &QuadParams) -> [f64; 4] {
        let g = params.gravity;
        let mut f = a_des + Vec3::new(0.0, 0.0, g);
        f.z = f.z.max(0.2 * g);
        let horiz = (f.x * f.x + f.y * f.y).sqrt();
        let max_h = f.z * self.max_tilt.tan();
        if horiz > max_h {
            f.x *= max_h / horiz;
            f.y *= max_h / horiz;
        }
        let f = f * params.mass;
        let r = *state.rotation().matrix();
        let z_b = r.column(2).into_owned();
        let thrust = f.dot(&z_b).clamp(0.0, params.max_total_thrust);
        let z_d = f.normalize();

        let x_b = r.column(0).into_owned();
        let mut x_c = heading.unwrap_or(x_b);
        x_c.z = 0.0;
        if x_c.norm() < 1e-6 {
            x_c = Vec3::new(x_b.x, x_b.y, 0.0);
        }
        if x_c.norm() < 1e-6 {
            x_c = Vec3::x();
        }
        let y_d = z_d.cross(&x_c.normalize()).normalize();
        let x_d = y_d.cross(&z_d);
        let r_d = Matrix3::from_columns(&[x_d, y_d, z_d]);
        let e = vee(&(r_d.transpose() * r - r.transpose() * r_d)) * 0.5;
        let w = Vec3::new(-self.attitude_gain * e.x, -self.attitude_gain * e.y, -self.yaw_gain * e.z);
        let lim = params.body_rate_limits;
        [
            (2.0 * thrust / params.max_total_thrust - 1.0).clamp(-1.0, 1.0),
            (w.x / lim[0]).clamp(-1.0, 1.0),
            (w.y / lim[1]).clamp(-1.0, 1.0),
            (w.z / lim[2]).clamp(-1.0, 1.0),
        ]
    }
}

/// Damps velocity and holds the stabilization target height.
#[derive(Debug, Clone, Copy)]
pub struct HoverPilot {
    pub velocity_gain: f64,
    pub height_gain: f64,
    pub max_accel: f64,
    pub inner: AccelerationTracker,
}

impl Default for HoverPilot {
    fn default() -> Self {
        Self { velocity_gain: 3.0, height_gain: 2.0, max_accel: 20.0, inner: AccelerationTracker::default() }
    }
}

impl Pilot for HoverPilot {
    fn act(&mut self, env: &Env, cfg: &EnvConfig, _obs: &Observation) -> [f64; 4] {
        let s = env.state();
        let z_d = cfg.stabilization.target_height;
        let mut a = -self.velocity_gain * s.velocity;
        a.z += self.height_gain * (z_d - s.position.z);
        if a.norm() > self.max_accel {
            a *= self.max_accel / a.norm();
        }
        self.inner.command(s, a, None, &cfg.quad)
    }
}

/// Follows the reference velocity with acceleration feedforward.
#[derive(Debug, Clone, Copy)]
pub struct VelocityPilot {
    pub gain: f64,
    pub inner: AccelerationTracker,
}

impl Default for VelocityPilot {
    fn default() -> Self {
        Self { gain: 4.0, inner: AccelerationTracker::default() }
    }
}

impl Pilot for VelocityPilot {
    fn act(&mut self, env: &Env, cfg: &EnvConfig, _obs: &Observation) -> [f64; 4] {
        let s = env.state();
        let Some(vd) = env.desired_velocity() else {
            return cfg.quad.hover_policy_output();
        };
        let k = env.steps() as usize;
        let ff = match env.detail() {
            crate::tasks::env::EpisodeDetail::Tracking { profile } => (profile.at(k + 1) - vd) / cfg.dt_ctrl,
            _ => Vec3::zeros(),
        };
        self.inner.command(s, ff + self.gain * (vd - s.velocity), None, &cfg.quad)
    }
}

/// Arc-length sampled closed path through the gate centres.
#[derive(Debug, Clone)]
pub struct GatePath {
    points: Vec<Vec3>,
    arc: Vec<f64>,
}

impl GatePath {
    /// Cubic Hermite segments from `start` through gates `0, 1, …, N-1, 0, 1`,
    /// leaving each gate along its normal.
    pub fn new(track: &Track, start: Vec3, tangent_scale: f64) -> Self {
        let n = track.len();
        let mut knots = vec![(start, (track.gate(0).center - start).normalize() * 0.3)];
        for i in 0..=n + 1 {
            let g = track.gate(i);
            knots.push((g.center, g.normal));
        }
        let mut points = Vec::new();
        for w in knots.windows(2) {
            let ((p0, d0), (p1, d1)) = (w[0], w[1]);
            let len = (p1 - p0).norm() * tangent_scale;
            let (m0, m1) = (d0 * len, d1 * len);
            let steps = 400;
            for k in 0..steps {
                let t = k as f64 / steps as f64;
                let (t2, t3) = (t * t, t * t * t);
                let p = p0 * (2.0 * t3 - 3.0 * t2 + 1.0)
                    + m0 * (t3 - 2.0 * t2 + t)
                    + p1 * (-2.0 * t3 + 3.0 * t2)
                    + m1 * (t3 - t2);
                points.push(p);
            }
        }
        points.push(knots.last().expect("non-empty").0);
        let mut arc = vec![0.0];
        for w in points.windows(2) {
            arc.push(arc.last().unwrap() + (w[1] - w[0]).norm());
        }
        Self { points, arc }
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    pub fn at(&self, s: f64) -> Vec3 {
        let s = s.clamp(0.0, self.length());
        let i = self.arc.partition_point(|a| *a <= s).clamp(1, self.arc.len() - 1);
        let (a0, a1) = (self.arc[i - 1], self.arc[i]);
        let w = if a1 > a0 { (s - a0) / (a1 - a0) } else { 0.0 };
        self.points[i - 1] * (1.0 - w) + self.points[i] * w
    }
}

/// Flies a time-parameterised reference along a [`GatePath`] at constant speed
/// after a constant-acceleration launch.
#[derive(Debug, Clone)]
pub struct GateFollower {
    pub speed: f64,
    pub launch_accel: f64,
    pub position_gain: f64,
    pub velocity_gain: f64,
    pub tangent_scale: f64,
    pub inner: AccelerationTracker,
    path: Option<GatePath>,
}

impl Default for GateFollower {
    fn default() -> Self {
        Self {
            speed: 4.0,
            launch_accel: 4.0,
            position_gain: 20.0,
            velocity_gain: 9.0,
            tangent_scale: 1.0,
            inner: AccelerationTracker { attitude_gain: 12.0, ..AccelerationTracker::default() },
            path: None,
        }
    }
}

impl GateFollower {
    /// Arc length, speed and tangential acceleration of the reference at `t`.
    fn arc_at(&self, t: f64) -> (f64, f64, f64) {
        let t_launch = self.speed / self.launch_accel;
        if t < t_launch {
            (0.5 * self.launch_accel * t * t, self.launch_accel * t, self.launch_accel)
        } else {
            (0.5 * self.launch_accel * t_launch * t_launch + self.speed * (t - t_launch), self.speed, 0.0)
        }
    }
}

impl Pilot for GateFollower {
    fn reset(&mut self, env: &Env, cfg: &EnvConfig) {
        self.path = Some(GatePath::new(&cfg.track, env.state().position, self.tangent_scale));
    }

    fn act(&mut self, env: &Env, cfg: &EnvConfig, _obs: &Observation) -> [f64; 4] {
        let path = self.path.as_ref().expect("reset before act");
        let s = env.state();
        let t = env.time(cfg) + cfg.dt_ctrl;
        let (arc, speed, along) = self.arc_at(t);
        let h = 0.25;
        let (pm, p0, pp) = (path.at(arc - h), path.at(arc), path.at(arc + h));
        let tangent = (pp - pm) / (2.0 * h);
        let v_ref = tangent * speed;
        let a_ref = (pp - 2.0 * p0 + pm) / (h * h) * speed * speed + tangent * along;
        let a = a_ref + self.position_gain * (p0 - s.position) + self.velocity_gain * (v_ref - s.velocity);
        self.inner.command(s, a, Some(tangent), &cfg.quad)
    }
}
