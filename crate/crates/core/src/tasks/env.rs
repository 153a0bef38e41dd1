//! Episode state machine shared by the three tasks.

use crate::dynamics::{self, action_from_policy_output, Diagnostics, QuadParams, QuadState};
use crate::geom::{Quaternion, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::curriculum::{CurriculumConfig, CurriculumState};
use super::profile::{sample_velocity_profile, VelocityProfile};
use super::reward::{
    racing_reward, stabilization_reward, tracking_reward, AttitudeError, RacingCoeffs, RacingEvents, Reward,
    StabilizationCoeffs, TrackingCoeffs,
};
use super::track::{gate_pass_check, hits_gate_frame, Track};
use super::{assemble_shared_obs, racing_task_obs, Observation, TaskError, TaskId, NUM_TASKS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RacingConfig {
    pub coeffs: RacingCoeffs,
    /// s
    pub horizon: f64,
    /// Track file; the bundled figure-8 when absent.
    pub track_file: Option<String>,
    pub start_center: [f64; 3],
    pub start_half_extent: [f64; 3],
    /// Extra aperture tolerance for the pass test, m.
    pub pass_margin: f64,
    /// Collision radius around the drone centre, m.
    pub drone_radius: f64,
    /// Leaving `|x|, |y| <= arena_half_extent[0..2]`, `z <= arena_half_extent[2]` is a crash.
    pub arena_half_extent: [f64; 3],
}

impl Default for RacingConfig {
    fn default() -> Self {
        Self {
            coeffs: RacingCoeffs::default(),
            horizon: 15.0,
            track_file: None,
            start_center: [2.0, 4.0, 2.0],
            start_half_extent: [1.0, 1.0, 0.5],
            pass_margin: 0.0,
            drone_radius: 0.15,
            arena_half_extent: [20.0, 15.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizationConfig {
    pub coeffs: StabilizationCoeffs,
    pub attitude_error: AttitudeError,
    /// s
    pub horizon: f64,
    /// Target height, m.
    pub target_height: f64,
    /// Per-axis initial speed limits at full difficulty (scale 1), m/s.
    pub initial_speed_limits: [f64; 3],
    /// Horizontal / vertical position spread around `(0, 0, target_height)`, m.
    pub position_spread: [f64; 2],
    /// Maximum initial roll and pitch, rad.
    pub max_tilt: f64,
    /// Maximum initial body rate per axis, rad/s.
    pub max_body_rate: f64,
    /// Height kept above the ground after one second of ballistic flight, m.
    pub ground_clearance: f64,
    /// m/s
    pub hover_speed: f64,
    /// Time the hover condition must hold before it counts, s.
    pub hover_window: f64,
    pub terminate_on_success: bool,
    /// Added on ground contact, which ends the episode.
    pub crash_penalty: f64,
}

impl Default for StabilizationConfig {
    fn default() -> Self {
        Self {
            coeffs: StabilizationCoeffs::default(),
            attitude_error: AttitudeError::GeodesicAngle,
            horizon: 5.0,
            target_height: 5.0,
            initial_speed_limits: [20.0, 20.0, 4.0],
            position_spread: [2.0, 1.0],
            max_tilt: 30f64.to_radians(),
            max_body_rate: 1.0,
            ground_clearance: 0.5,
            hover_speed: 0.5,
            hover_window: 0.5,
            terminate_on_success: false,
            crash_penalty: -10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub coeffs: TrackingCoeffs,
    /// s
    pub horizon: f64,
    pub start_position: [f64; 3],
    /// Bound of the per-step acceleration draw, m/s².
    pub max_accel: f64,
    /// Reference velocity at the start of the episode, m/s.
    pub initial_velocity: [f64; 3],
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            coeffs: TrackingCoeffs::default(),
            horizon: 10.0,
            start_position: [0.0, 0.0, 5.0],
            max_accel: 15.0,
            initial_velocity: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub quad: QuadParams,
    /// Control period, s.
    pub dt_ctrl: f64,
    /// Append a one-hot task code to the task-specific observation.
    pub one_hot: bool,
    pub curriculum: CurriculumConfig,
    pub racing: RacingConfig,
    pub stabilization: StabilizationConfig,
    pub tracking: TrackingConfig,
    #[serde(skip, default = "Track::figure8")]
    pub track: Track,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            quad: QuadParams::default(),
            dt_ctrl: 1.0 / 50.0,
            one_hot: true,
            curriculum: CurriculumConfig::default(),
            racing: RacingConfig::default(),
            stabilization: StabilizationConfig::default(),
            tracking: TrackingConfig::default(),
            track: Track::figure8(),
        }
    }
}

impl EnvConfig {
    pub fn horizon_steps(&self, task: TaskId) -> u64 {
        let h = match task {
            TaskId::Racing => self.racing.horizon,
            TaskId::Stabilization => self.stabilization.horizon,
            TaskId::Tracking => self.tracking.horizon,
        };
        (h / self.dt_ctrl).round().max(1.0) as u64
    }

    fn hover_steps_required(&self) -> u32 {
        (self.stabilization.hover_window / self.dt_ctrl).round() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    None,
    Crash,
    Success,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatePass {
    pub gate: usize,
    /// Episode time of the crossing, s.
    pub time: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepEvents {
    pub gate_pass: Option<GatePass>,
    /// Stabilization hover condition held over the full window.
    pub hovering: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub task: TaskId,
    pub episode_return: f64,
    pub length: u64,
    pub reason: TerminationReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub reward_components: Vec<(&'static str, f64)>,
    pub terminated: bool,
    pub termination_reason: TerminationReason,
    pub events: StepEvents,
    /// Set on the step that ends the episode.
    pub episode: Option<EpisodeSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EpisodeDetail {
    Racing { next_gate: usize, passes: Vec<GatePass> },
    Stabilization { target_height: f64, hover_steps: u32 },
    Tracking { profile: VelocityProfile },
}

/// One environment instance: owns its random stream and the current episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Env {
    task: TaskId,
    rng: ChaCha8Rng,
    state: QuadState,
    a_prev: [f64; 4],
    steps: u64,
    done: bool,
    episode_return: f64,
    detail: EpisodeDetail,
    pub diagnostics: Diagnostics,
}

fn uniform<R: Rng>(rng: &mut R, half: f64) -> f64 {
    half * (2.0 * rng.random::<f64>() - 1.0)
}

/// Random initial state for the stabilization task at curriculum speed scale
/// `curriculum.speed_scale`. The start height is raised so that one second of
/// unpowered flight stays `ground_clearance` above the ground.
pub fn sample_stabilization_initial<R: Rng>(
    rng: &mut R,
    curriculum: &CurriculumState,
    cfg: &StabilizationConfig,
    params: &QuadParams,
) -> QuadState {
    let s = curriculum.speed_scale;
    let lim = cfg.initial_speed_limits;
    let [spread_xy, spread_z] = cfg.position_spread;
    let position = Vec3::new(
        uniform(rng, spread_xy),
        uniform(rng, spread_xy),
        cfg.target_height + uniform(rng, spread_z),
    );
    let attitude = Quaternion::from_euler(
        uniform(rng, cfg.max_tilt),
        uniform(rng, cfg.max_tilt),
        uniform(rng, PI),
    );
    let velocity = Vec3::new(uniform(rng, s * lim[0]), uniform(rng, s * lim[1]), uniform(rng, s * lim[2]));
    let body_rates = Vec3::new(
        uniform(rng, cfg.max_body_rate),
        uniform(rng, cfg.max_body_rate),
        uniform(rng, cfg.max_body_rate),
    );
    let min_height = ballistic_min_height(velocity.z, params.gravity) + cfg.ground_clearance;
    let mut state = QuadState::hover_at(position, params);
    state.position.z = state.position.z.max(min_height);
    state.attitude = attitude;
    state.velocity = velocity;
    state.body_rates = body_rates;
    state
}

/// Height lost over one second of free fall starting with vertical speed `vz`.
pub fn ballistic_min_height(vz: f64, g: f64) -> f64 {
    (-vz + 0.5 * g).max(0.0)
}

impl Env {
    pub fn new(task: TaskId, seed: u64) -> Self {
        Self {
            task,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: QuadState::hover_at(Vec3::zeros(), &QuadParams::default()),
            a_prev: [0.0; 4],
            steps: 0,
            done: true,
            episode_return: 0.0,
            detail: EpisodeDetail::Stabilization { target_height: 0.0, hover_steps: 0 },
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn task(&self) -> TaskId {
        self.task
    }

    pub fn state(&self) -> &QuadState {
        &self.state
    }

    pub fn previous_action(&self) -> &[f64; 4] {
        &self.a_prev
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn time(&self, cfg: &EnvConfig) -> f64 {
        self.steps as f64 * cfg.dt_ctrl
    }

    pub fn detail(&self) -> &EpisodeDetail {
        &self.detail
    }

    /// Reference velocity at the current step (tracking only).
    pub fn desired_velocity(&self) -> Option<Vec3> {
        match &self.detail {
            EpisodeDetail::Tracking { profile } => Some(profile.at(self.steps as usize)),
            _ => None,
        }
    }

    pub fn next_gate(&self) -> Option<usize> {
        match &self.detail {
            EpisodeDetail::Racing { next_gate, .. } => Some(*next_gate),
            _ => None,
        }
    }

    pub fn gate_passes(&self) -> &[GatePass] {
        match &self.detail {
            EpisodeDetail::Racing { passes, .. } => passes,
            _ => &[],
        }
    }

    /// Starts a new episode with an initial state drawn for this task.
    pub fn reset(&mut self, cfg: &EnvConfig, curriculum: &CurriculumState) -> Observation {
        let params = &cfg.quad;
        match self.task {
            TaskId::Racing => {
                let c = Vec3::from(cfg.racing.start_center);
                let h = cfg.racing.start_half_extent;
                let p = c + Vec3::new(
                    uniform(&mut self.rng, h[0]),
                    uniform(&mut self.rng, h[1]),
                    uniform(&mut self.rng, h[2]),
                );
                return self.reset_racing_from(cfg, p);
            }
            TaskId::Stabilization => {
                self.state = sample_stabilization_initial(&mut self.rng, curriculum, &cfg.stabilization, params);
                self.detail = EpisodeDetail::Stabilization {
                    target_height: cfg.stabilization.target_height,
                    hover_steps: 0,
                };
            }
            TaskId::Tracking => {
                self.state = QuadState::hover_at(Vec3::from(cfg.tracking.start_position), params);
                let profile = sample_velocity_profile(
                    &mut self.rng,
                    curriculum.speed_bounds,
                    cfg.tracking.max_accel,
                    cfg.tracking.initial_velocity,
                    cfg.horizon_steps(TaskId::Tracking) as usize,
                    cfg.dt_ctrl,
                );
                self.detail = EpisodeDetail::Tracking { profile };
            }
        }
        self.begin_episode();
        self.observe(cfg)
    }

    /// Racing episode from a given start position, at rest and facing gate 0.
    pub fn reset_racing_from(&mut self, cfg: &EnvConfig, position: Vec3) -> Observation {
        debug_assert_eq!(self.task, TaskId::Racing);
        let to_gate = cfg.track.gate(0).center - position;
        self.state = QuadState::hover_at(position, &cfg.quad);
        self.state.attitude = Quaternion::from_axis_angle(Vec3::z(), to_gate.y.atan2(to_gate.x));
        self.detail = EpisodeDetail::Racing { next_gate: 0, passes: Vec::new() };
        self.begin_episode();
        self.observe(cfg)
    }

    /// Starts a stabilization episode from an explicit state.
    pub fn reset_stabilization_from(&mut self, cfg: &EnvConfig, state: QuadState) -> Observation {
        self.state = state;
        self.detail = EpisodeDetail::Stabilization {
            target_height: cfg.stabilization.target_height,
            hover_steps: 0,
        };
        self.begin_episode();
        self.observe(cfg)
    }

    /// Starts a tracking episode with a given reference profile.
    pub fn reset_tracking_with(&mut self, cfg: &EnvConfig, profile: VelocityProfile) -> Observation {
        self.state = QuadState::hover_at(Vec3::from(cfg.tracking.start_position), &cfg.quad);
        self.detail = EpisodeDetail::Tracking { profile };
        self.begin_episode();
        self.observe(cfg)
    }

    fn begin_episode(&mut self) {
        self.a_prev = [0.0; 4];
        self.steps = 0;
        self.done = false;
        self.episode_return = 0.0;
    }

    pub fn observe(&self, cfg: &EnvConfig) -> Observation {
        let shared = assemble_shared_obs(&self.state, &self.a_prev);
        let accel = self.state.acceleration(&cfg.quad);
        let mut task_specific: Vec<f64> = match &self.detail {
            EpisodeDetail::Racing { next_gate, .. } => racing_task_obs(&self.state, &cfg.track, *next_gate).to_vec(),
            EpisodeDetail::Stabilization { target_height, .. } => {
                vec![accel.x, accel.y, accel.z, *target_height]
            }
            EpisodeDetail::Tracking { profile } => {
                let vd = profile.at(self.steps as usize);
                vec![vd.x, vd.y, vd.z, accel.x, accel.y, accel.z]
            }
        };
        if cfg.one_hot {
            let mut code = [0.0; NUM_TASKS];
            code[self.task.index()] = 1.0;
            task_specific.extend_from_slice(&code);
        }
        Observation { shared, task_specific, task: self.task }
    }

    /// Applies the raw policy output `u` for one control period.
    pub fn step(&mut self, cfg: &EnvConfig, u: &[f64; 4]) -> Result<StepResult, TaskError> {
        if self.done {
            return Err(TaskError::EpisodeTerminated);
        }
        let u_t = u.map(|x| if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) });
        let action = action_from_policy_output(u, &cfg.quad, &mut self.diagnostics);
        let prev = self.state.clone();
        let next = match dynamics::step(&prev, &action, cfg.dt_ctrl, &cfg.quad, &mut self.diagnostics) {
            Ok(s) => s,
            Err(e) => {
                self.done = true;
                return Err(e.into());
            }
        };
        self.steps += 1;
        let time = self.steps as f64 * cfg.dt_ctrl;
        let mut events = StepEvents::default();
        let mut reason = TerminationReason::None;

        let reward = match &mut self.detail {
            EpisodeDetail::Racing { next_gate, passes } => {
                let target = *next_gate;
                let rc = &cfg.racing;
                let crossing = gate_pass_check(&prev.position, &next.position, cfg.track.gate(target), rc.pass_margin);
                if crossing.passed {
                    let pass = GatePass { gate: target % cfg.track.len(), time, error: crossing.gate_error };
                    passes.push(pass);
                    events.gate_pass = Some(pass);
                    *next_gate = (target + 1) % cfg.track.len();
                }
                let arena = rc.arena_half_extent;
                let p = next.position;
                let crashed = p.z <= 0.0
                    || p.x.abs() > arena[0]
                    || p.y.abs() > arena[1]
                    || p.z > arena[2]
                    || cfg
                        .track
                        .gates
                        .iter()
                        .any(|g| hits_gate_frame(&prev.position, &p, g, rc.drone_radius));
                if crashed {
                    reason = TerminationReason::Crash;
                }
                let ev = RacingEvents { passed: crossing.passed, crashed };
                racing_reward(&prev, &next, &u_t, &self.a_prev, &cfg.track, target, ev, &rc.coeffs)
            }
            EpisodeDetail::Stabilization { target_height, hover_steps } => {
                let sc = &cfg.stabilization;
                if next.velocity.norm() < sc.hover_speed {
                    *hover_steps = hover_steps.saturating_add(1);
                } else {
                    *hover_steps = 0;
                }
                events.hovering = *hover_steps >= cfg.hover_steps_required();
                if next.position.z <= 0.0 {
                    reason = TerminationReason::Crash;
                } else if events.hovering && sc.terminate_on_success {
                    reason = TerminationReason::Success;
                }
                let r = stabilization_reward(
                    &next,
                    &u_t,
                    &self.a_prev,
                    *target_height,
                    events.hovering,
                    sc.attitude_error,
                    &sc.coeffs,
                );
                let crash = if reason == TerminationReason::Crash { sc.crash_penalty } else { 0.0 };
                let mut terms = r.terms;
                terms.push(("crash", crash));
                Reward::from_terms(terms)
            }
            EpisodeDetail::Tracking { profile } => {
                let vd = profile.at(self.steps as usize);
                tracking_reward(&next, &u_t, &self.a_prev, &vd, &cfg.tracking.coeffs)
            }
        };

        if reason == TerminationReason::None && self.steps >= cfg.horizon_steps(self.task) {
            reason = TerminationReason::Timeout;
        }
        self.state = next;
        self.a_prev = u_t;
        let Reward { total, terms } = reward;
        self.episode_return += total;
        let terminated = reason != TerminationReason::None;
        self.done = terminated;
        let episode = terminated.then(|| EpisodeSummary {
            task: self.task,
            episode_return: self.episode_return,
            length: self.steps,
            reason,
        });
        Ok(StepResult {
            observation: self.observe(cfg),
            reward: total,
            reward_components: terms,
            terminated,
            termination_reason: reason,
            events,
            episode,
        })
    }
}

/// Fresh environments for `per_task` instances of each task, seeded from `seed`.
pub fn make_envs(tasks: &[TaskId], per_task: usize, seed: u64) -> Vec<Env> {
    let mut out = Vec::with_capacity(tasks.len() * per_task);
    for &t in tasks {
        for i in 0..per_task {
            let s = seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((t.index() * 10_007 + i) as u64);
            out.push(Env::new(t, s));
        }
    }
    out
}
