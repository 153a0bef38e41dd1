//! Evaluation metrics for the three tasks.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::pilot::Pilot;
use super::HarnessError;
use crate::geom::Vec3;
use crate::tasks::{CurriculumConfig, CurriculumState, Env, EnvConfig, GatePass, Observation, TaskError, TaskId, TerminationReason};

/// One recorded control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub position: [f64; 3],
    pub attitude: [f64; 4],
    pub velocity: [f64; 3],
    pub body_rates: [f64; 3],
    pub u: [f64; 4],
    pub reward: f64,
    pub desired_velocity: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub task: TaskId,
    /// Row 0 is the initial state.
    pub rows: Vec<TraceRow>,
    pub reason: TerminationReason,
    pub episode_return: f64,
    pub passes: Vec<GatePass>,
}

fn row(env: &Env, cfg: &EnvConfig, u: [f64; 4], reward: f64) -> TraceRow {
    let s = env.state();
    TraceRow {
        t: env.time(cfg),
        position: s.position.into(),
        attitude: s.attitude.as_array(),
        velocity: s.velocity.into(),
        body_rates: s.body_rates.into(),
        u,
        reward,
        desired_velocity: env.desired_velocity().map(Into::into),
    }
}

/// Runs `pilot` from the current (freshly reset) state until the episode ends
/// or `stop` returns true.
pub fn run_episode(
    env: &mut Env,
    cfg: &EnvConfig,
    pilot: &mut dyn Pilot,
    first: Observation,
    mut stop: impl FnMut(&Env) -> bool,
) -> Result<EpisodeTrace, TaskError> {
    pilot.reset(env, cfg);
    let mut rows = vec![row(env, cfg, [0.0; 4], 0.0)];
    let mut obs = first;
    let mut ret = 0.0;
    let mut reason = TerminationReason::None;
    while !env.is_done() {
        let u = pilot.act(env, cfg, &obs);
        let step = env.step(cfg, &u)?;
        ret += step.reward;
        rows.push(row(env, cfg, u, step.reward));
        reason = step.termination_reason;
        obs = step.observation;
        if stop(env) {
            break;
        }
    }
    Ok(EpisodeTrace { task: env.task(), rows, reason, episode_return: ret, passes: env.gate_passes().to_vec() })
}

/// Curriculum state at its caps: the full-difficulty initial distribution.
pub fn full_difficulty(cfg: &CurriculumConfig) -> CurriculumState {
    CurriculumState {
        samples_seen: 0,
        level: 0,
        speed_scale: cfg.stabilization_scale_cap,
        speed_bounds: cfg.tracking_bound_caps,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RacingEval {
    pub trials: usize,
    pub completed: usize,
    pub crashes: usize,
    pub success_rate: f64,
    /// Mean over every gate pass of every trial; absent without passes.
    pub mean_gate_error: Option<f64>,
    /// Mean lap time over completed trials; absent when none completed.
    pub lap_time: Option<f64>,
}

/// Start positions on a regular grid over the start box when `n` is a cube,
/// otherwise uniformly drawn from it.
pub fn racing_starts<R: Rng>(cfg: &EnvConfig, n: usize, rng: &mut R) -> Vec<Vec3> {
    let c = Vec3::from(cfg.racing.start_center);
    let h = Vec3::from(cfg.racing.start_half_extent);
    let side = (n as f64).cbrt().round() as usize;
    if side.pow(3) == n {
        let off = |i: usize| -1.0 + (2 * i + 1) as f64 / side as f64;
        let mut out = Vec::with_capacity(n);
        for i in 0..side {
            for j in 0..side {
                for k in 0..side {
                    out.push(c + Vec3::new(off(i) * h.x, off(j) * h.y, off(k) * h.z));
                }
            }
        }
        out
    } else {
        (0..n)
            .map(|_| {
                c + Vec3::new(
                    h.x * (2.0 * rng.random::<f64>() - 1.0),
                    h.y * (2.0 * rng.random::<f64>() - 1.0),
                    h.z * (2.0 * rng.random::<f64>() - 1.0),
                )
            })
            .collect()
    }
}

/// A trial succeeds once gate 0, every other gate and gate 0 again have been
/// passed in order. The lap time runs between the two passes of gate 0.
pub fn eval_racing<R: Rng>(
    pilot: &mut dyn Pilot,
    cfg: &EnvConfig,
    n_starts: usize,
    rng: &mut R,
    traces: Option<&mut Vec<EpisodeTrace>>,
) -> Result<RacingEval, TaskError> {
    let lap = cfg.track.len() + 1;
    let mut env = Env::new(TaskId::Racing, 0);
    let (mut completed, mut crashes) = (0, 0);
    let (mut err_sum, mut n_pass) = (0.0, 0usize);
    let mut lap_times = Vec::new();
    let mut kept = Vec::new();
    for start in racing_starts(cfg, n_starts, rng) {
        let obs = env.reset_racing_from(cfg, start);
        let trace = run_episode(&mut env, cfg, pilot, obs, |e| e.gate_passes().len() >= lap)?;
        for p in &trace.passes {
            err_sum += p.error;
            n_pass += 1;
        }
        if trace.passes.len() >= lap {
            completed += 1;
            lap_times.push(trace.passes[lap - 1].time - trace.passes[0].time);
        } else if trace.reason == TerminationReason::Crash {
            crashes += 1;
        }
        if traces.is_some() {
            kept.push(trace);
        }
    }
    if let Some(t) = traces {
        t.extend(kept);
    }
    Ok(RacingEval {
        trials: n_starts,
        completed,
        crashes,
        success_rate: if n_starts > 0 { completed as f64 / n_starts as f64 } else { 0.0 },
        mean_gate_error: (n_pass > 0).then(|| err_sum / n_pass as f64),
        lap_time: (!lap_times.is_empty()).then(|| lap_times.iter().sum::<f64>() / lap_times.len() as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationTrial {
    pub initial_speed: f64,
    pub t_half: Option<f64>,
    pub t_full: Option<f64>,
    pub crashed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationEval {
    pub trials: usize,
    pub crashes: usize,
    /// Fraction of trials in which the hover speed was reached.
    pub success_rate: f64,
    /// Means over the trials that reached the respective threshold.
    pub t_half: Option<f64>,
    pub t_full: Option<f64>,
    pub per_trial: Vec<StabilizationTrial>,
}

/// Times at which the speed first drops to half its initial value and below
/// the hover threshold.
pub fn stabilization_times(trace: &EpisodeTrace, hover_speed: f64) -> StabilizationTrial {
    let speed = |r: &TraceRow| Vec3::from(r.velocity).norm();
    let v0 = speed(&trace.rows[0]);
    let t_half = trace.rows.iter().find(|r| speed(r) <= 0.5 * v0).map(|r| r.t);
    let t_full = trace.rows.iter().find(|r| speed(r) < hover_speed).map(|r| r.t);
    StabilizationTrial { initial_speed: v0, t_half, t_full, crashed: trace.reason == TerminationReason::Crash }
}

fn mean_some(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Trials start from the full-difficulty initial distribution; each runs to
/// the horizon or a crash.
pub fn eval_stabilization(
    pilot: &mut dyn Pilot,
    cfg: &EnvConfig,
    n_trials: usize,
    seed: u64,
    traces: Option<&mut Vec<EpisodeTrace>>,
) -> Result<StabilizationEval, TaskError> {
    let mut cfg = cfg.clone();
    cfg.stabilization.terminate_on_success = false;
    let cur = full_difficulty(&cfg.curriculum);
    let mut env = Env::new(TaskId::Stabilization, seed);
    let mut per_trial = Vec::with_capacity(n_trials);
    let mut kept = Vec::new();
    for _ in 0..n_trials {
        let obs = env.reset(&cfg, &cur);
        let trace = run_episode(&mut env, &cfg, pilot, obs, |_| false)?;
        per_trial.push(stabilization_times(&trace, cfg.stabilization.hover_speed));
        if traces.is_some() {
            kept.push(trace);
        }
    }
    if let Some(t) = traces {
        t.extend(kept);
    }
    let reached = per_trial.iter().filter(|t| t.t_full.is_some()).count();
    Ok(StabilizationEval {
        trials: n_trials,
        crashes: per_trial.iter().filter(|t| t.crashed).count(),
        success_rate: if n_trials > 0 { reached as f64 / n_trials as f64 } else { 0.0 },
        t_half: mean_some(per_trial.iter().map(|t| t.t_half)),
        t_full: mean_some(per_trial.iter().map(|t| t.t_full)),
        per_trial,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingEval {
    pub trials: usize,
    pub crashes: usize,
    /// Mean of `‖v − v_d‖` over every step of every trial, m/s.
    pub e_v: f64,
}

/// Mean velocity error of a recorded tracking episode, skipping the initial row.
pub fn velocity_error(trace: &EpisodeTrace) -> (f64, usize) {
    trace.rows[1..]
        .iter()
        .filter_map(|r| r.desired_velocity.map(|vd| (Vec3::from(r.velocity) - Vec3::from(vd)).norm()))
        .fold((0.0, 0), |(s, n), e| (s + e, n + 1))
}

/// Reference profiles are drawn at the capped speed bounds.
pub fn eval_tracking(
    pilot: &mut dyn Pilot,
    cfg: &EnvConfig,
    n_trials: usize,
    seed: u64,
    traces: Option<&mut Vec<EpisodeTrace>>,
) -> Result<TrackingEval, TaskError> {
    let cur = full_difficulty(&cfg.curriculum);
    let mut env = Env::new(TaskId::Tracking, seed);
    let (mut sum, mut n, mut crashes) = (0.0, 0usize, 0);
    let mut kept = Vec::new();
    for _ in 0..n_trials {
        let obs = env.reset(cfg, &cur);
        let trace = run_episode(&mut env, cfg, pilot, obs, |_| false)?;
        let (s, k) = velocity_error(&trace);
        sum += s;
        n += k;
        if trace.reason == TerminationReason::Crash {
            crashes += 1;
        }
        if traces.is_some() {
            kept.push(trace);
        }
    }
    if let Some(t) = traces {
        t.extend(kept);
    }
    Ok(TrackingEval { trials: n_trials, crashes, e_v: if n > 0 { sum / n as f64 } else { 0.0 } })
}

pub const TRACE_HEADER: [&str; 24] = [
    "trial", "t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz", "u0", "u1", "u2",
    "u3", "reward", "vdx", "vdy", "vdz", "task",
];

/// Writes traces as one CSV, one row per control step.
pub fn write_traces(path: &Path, traces: &[EpisodeTrace]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_HEADER)?;
    for (i, tr) in traces.iter().enumerate() {
        for r in &tr.rows {
            let mut rec: Vec<String> = vec![i.to_string(), r.t.to_string()];
            rec.extend(r.position.iter().map(f64::to_string));
            rec.extend(r.attitude.iter().map(f64::to_string));
            rec.extend(r.velocity.iter().map(f64::to_string));
            rec.extend(r.body_rates.iter().map(f64::to_string));
            rec.extend(r.u.iter().map(f64::to_string));
            rec.push(r.reward.to_string());
            match r.desired_velocity {
                Some(vd) => rec.extend(vd.iter().map(f64::to_string)),
                None => rec.extend(std::iter::repeat_n(String::new(), 3)),
            }
            rec.push(tr.task.to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
