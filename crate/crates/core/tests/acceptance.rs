//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run a subset with `cargo test --test acceptance -- 1 5 10`.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use std::fs;
use std::time::Instant;

use mtquad_core::dynamics::{
    action_from_policy_output, integrate_rigid_body, step, Diagnostics, QuadParams, QuadState,
};
use mtquad_core::geom::{
    quat_derivative, quat_normalize, quat_to_rotmat, rot6d_to_rotmat, rotmat_to_6d, rotmat_to_quat, Quaternion,
    Vec3,
};
use mtquad_core::harness::eval::{velocity_error, TraceRow};
use mtquad_core::harness::{
    eval_racing, eval_stabilization, EpisodeTrace, GateFollower, HoverPilot, PolicyPilot,
};
use mtquad_core::nets::{ArchitectureVariant, Mlp, NetWidths, PolicyParams};
use mtquad_core::tasks::reward::{
    racing_reward, stabilization_reward, tracking_reward, AttitudeError, RacingCoeffs, RacingEvents,
    StabilizationCoeffs, TrackingCoeffs,
};
use mtquad_core::tasks::{
    curriculum_update, CurriculumConfig, CurriculumState, Observation, TerminationReason, Track, SHARED_OBS_LEN,
};
use mtquad_core::trainer::run::{checkpoint_path, EPISODES_FILE, METRICS_FILE, POLICY_FILE};
use mtquad_core::trainer::{compute_gae, train, EpisodeRecord};
use mtquad_core::{EnvConfig, TaskId, TrainConfig, Trainer};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_quat(rng: &mut ChaCha8Rng) -> Quaternion {
    loop {
        let q = Quaternion::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if q.norm() > 1e-3 {
            return quat_normalize(&q).unwrap();
        }
    }
}

fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vec3::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale), rng.random_range(-scale..scale))
}

// 1

const HOVER_DRIFT_TOL: f64 = 1e-6;
const FREE_FALL_TOL: f64 = 1e-4;
const ENERGY_REL_TOL: f64 = 1e-6;
const MOTOR_LAG_TOL: f64 = 1e-6;
const DYNAMICS_BUDGET_S: f64 = 10.0;

fn dynamics_oracles() -> Outcome {
    let t0 = Instant::now();
    let p = QuadParams::default();
    let dt_ctrl = 0.02;
    let mut diag = Diagnostics::default();

    let start = Vec3::new(0.0, 0.0, 5.0);
    let hover = action_from_policy_output(&p.hover_policy_output(), &p, &mut diag);
    let mut s = QuadState::hover_at(start, &p);
    for _ in 0..500 {
        s = step(&s, &hover, dt_ctrl, &p, &mut diag).map_err(|e| e.to_string())?;
    }
    let drift = (s.position - start).norm();

    let (p0, v0) = (Vec3::new(1.0, -2.0, 30.0), Vec3::new(3.0, 1.0, 4.0));
    let mut s = QuadState { velocity: v0, motor_thrusts: [0.0; 4], ..QuadState::hover_at(p0, &p) };
    for _ in 0..500 {
        s = integrate_rigid_body(&s, p.dt_physics, &p).map_err(|e| e.to_string())?;
    }
    let analytic = p0 + v0 - Vec3::new(0.0, 0.0, 0.5 * p.gravity);
    let fall_err = (s.position - analytic).norm();

    let j = Vec3::from(p.inertia);
    let energy = |w: &Vec3| 0.5 * w.dot(&j.component_mul(w));
    let mut s = QuadState { body_rates: Vec3::new(3.0, -2.0, 1.5), motor_thrusts: [0.0; 4], ..QuadState::hover_at(p0, &p) };
    let e0 = energy(&s.body_rates);
    for _ in 0..5000 {
        s = integrate_rigid_body(&s, p.dt_physics, &p).map_err(|e| e.to_string())?;
    }
    let energy_rel = (energy(&s.body_rates) - e0).abs() / e0;

    let mut s = QuadState { motor_thrusts: [0.0; 4], ..QuadState::hover_at(start, &p) };
    let per_motor = hover.collective_thrust / 4.0;
    let mut lag_err: f64 = 0.0;
    for k in 1..=10 {
        s = step(&s, &hover, dt_ctrl, &p, &mut diag).map_err(|e| e.to_string())?;
        let expected = per_motor * (1.0 - (-(k as f64) * dt_ctrl / p.motor_time_constant).exp());
        for m in s.motor_thrusts {
            lag_err = lag_err.max((m - expected).abs());
        }
    }

    let elapsed = t0.elapsed().as_secs_f64();
    check(
        drift < HOVER_DRIFT_TOL
            && fall_err < FREE_FALL_TOL
            && energy_rel < ENERGY_REL_TOL
            && lag_err < MOTOR_LAG_TOL
            && elapsed < DYNAMICS_BUDGET_S,
        format!(
            "hover drift {drift:.2e} m (<{HOVER_DRIFT_TOL:.0e}), free fall {fall_err:.2e} m (<{FREE_FALL_TOL:.0e}), \
             energy {energy_rel:.2e} rel (<{ENERGY_REL_TOL:.0e}), motor lag {lag_err:.2e} N (<{MOTOR_LAG_TOL:.0e}), \
             {elapsed:.2} s (<{DYNAMICS_BUDGET_S} s)"
        ),
    )
}

// 2

const GEOM_TOL: f64 = 1e-9;
const QUAT_RATE_TOL: f64 = 1e-6;
const GEOM_SAMPLES: usize = 10_000;

fn geometry_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut q_err, mut r_err, mut six_err, mut rate_err): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..GEOM_SAMPLES {
        let q = random_quat(&mut rng);
        let r = quat_to_rotmat(&q).map_err(|e| e.to_string())?;
        let back = rotmat_to_quat(&r);
        let a = q.as_array();
        let b = back.as_array();
        let same: f64 = (0..4).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
        let flipped: f64 = (0..4).map(|i| (a[i] + b[i]).abs()).fold(0.0, f64::max);
        q_err = q_err.max(same.min(flipped));
        let r2 = quat_to_rotmat(&back).map_err(|e| e.to_string())?;
        r_err = r_err.max((r.matrix() - r2.matrix()).amax());
        let r6 = rot6d_to_rotmat(&rotmat_to_6d(&r)).map_err(|e| e.to_string())?;
        six_err = six_err.max((r.matrix() - r6.matrix()).amax());
    }
    let h = 1e-5;
    for _ in 0..1000 {
        let q = random_quat(&mut rng);
        let w = random_vec(&mut rng, 10.0);
        let advance = |t: f64| q.mul(&Quaternion::from_axis_angle(w, w.norm() * t)).as_array();
        let (fwd, bwd) = (advance(h), advance(-h));
        let d = quat_derivative(&q, &w);
        for i in 0..4 {
            rate_err = rate_err.max(((fwd[i] - bwd[i]) / (2.0 * h) - d[i]).abs());
        }
    }
    check(
        q_err < GEOM_TOL && r_err < GEOM_TOL && six_err < GEOM_TOL && rate_err < QUAT_RATE_TOL,
        format!(
            "{GEOM_SAMPLES} rotations: quat round trip {q_err:.1e}, matrix round trip {r_err:.1e}, \
             6-D {six_err:.1e} (<{GEOM_TOL:.0e}); quaternion rate vs central difference {rate_err:.1e} (<{QUAT_RATE_TOL:.0e})"
        ),
    )
}

// 3

const REWARD_TOL: f64 = 1e-12;
const TRANSITIONS_PER_TASK: usize = 20;

fn body_x(q: &Quaternion) -> Vec3 {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    Vec3::new(1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y + w * z), 2.0 * (x * z - w * y))
}

fn l2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn random_u(rng: &mut ChaCha8Rng) -> [f64; 4] {
    std::array::from_fn(|_| rng.random_range(-1.0..1.0))
}

fn compare(
    got: &mtquad_core::tasks::Reward,
    want: &[(&str, f64)],
    worst: &mut f64,
) -> Result<(), String> {
    if got.terms.len() != want.len() {
        return Err(format!("term count {} != {}", got.terms.len(), want.len()));
    }
    for ((name, v), (wname, w)) in got.terms.iter().zip(want) {
        if name != wname {
            return Err(format!("term {name} != {wname}"));
        }
        *worst = worst.max((v - w).abs());
    }
    *worst = worst.max((got.total - want.iter().map(|(_, v)| v).sum::<f64>()).abs());
    Ok(())
}

fn reward_oracles() -> Outcome {
    let p = QuadParams::default();
    let track = Track::figure8();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;

    let rc = RacingCoeffs::default();
    // stationary, level, facing the target gate, same action as before
    let gate = track.gate(0).center;
    let pos = gate + Vec3::new(-3.0, -4.0, 0.0);
    let yaw = (gate.y - pos.y).atan2(gate.x - pos.x);
    let still = QuadState { attitude: Quaternion::from_euler(0.0, 0.0, yaw), ..QuadState::hover_at(pos, &p) };
    let u = [0.2, 0.0, 0.0, 0.0];
    let r = racing_reward(&still, &still, &u, &u, &track, 0, RacingEvents::default(), &rc);
    let stationary = r.total;
    let r = racing_reward(&still, &still, &u, &u, &track, 0, RacingEvents { passed: false, crashed: true }, &rc);
    let crash = r.get("crash").unwrap_or(f64::NAN);

    for k in 0..TRANSITIONS_PER_TASK {
        let gi = k % track.len();
        let target = track.gate(gi).center;
        let prev = QuadState {
            attitude: random_quat(&mut rng),
            velocity: random_vec(&mut rng, 5.0),
            body_rates: random_vec(&mut rng, 3.0),
            ..QuadState::hover_at(target + random_vec(&mut rng, 6.0), &p)
        };
        let curr = QuadState {
            position: prev.position + random_vec(&mut rng, 0.3),
            attitude: random_quat(&mut rng),
            body_rates: random_vec(&mut rng, 3.0),
            ..prev.clone()
        };
        let (ut, up) = (random_u(&mut rng), random_u(&mut rng));
        let events = RacingEvents { passed: k % 5 == 1, crashed: k % 7 == 3 };
        let look = if events.passed { track.gate(gi + 1).center } else { target };
        let to = look - curr.position;
        let delta = (body_x(&curr.attitude).dot(&to) / to.norm()).clamp(-1.0, 1.0).acos();
        let want = [
            ("progress", 0.5 * ((prev.position - target).norm() - (curr.position - target).norm())),
            ("perception", 0.025 * (-delta.powi(4)).exp()),
            ("action", -2e-4 * l2(&ut, &up)),
            ("body_rate", -5e-4 * curr.body_rates.norm()),
            ("pass", if events.passed { -5.0 } else { 0.0 }),
            ("crash", if events.crashed { -10.0 } else { 0.0 }),
        ];
        let got = racing_reward(&prev, &curr, &ut, &up, &track, gi, events, &rc);
        compare(&got, &want, &mut worst)?;
    }

    let sc = StabilizationCoeffs::default();
    for k in 0..TRANSITIONS_PER_TASK {
        // attitudes between 0.2 and 2.8 rad keep both angle formulas well conditioned
        let angle = rng.random_range(0.2..2.8);
        let q = Quaternion::from_axis_angle(random_vec(&mut rng, 1.0), angle);
        let s = QuadState {
            attitude: if k == 0 { Quaternion::IDENTITY } else { q },
            velocity: random_vec(&mut rng, 8.0),
            body_rates: random_vec(&mut rng, 4.0),
            ..QuadState::hover_at(random_vec(&mut rng, 3.0) + Vec3::new(0.0, 0.0, 5.0), &p)
        };
        let (ut, up) = (random_u(&mut rng), random_u(&mut rng));
        let hovering = k % 4 == 0;
        let z_d = 5.0;
        let theta = 2.0 * s.attitude.w.abs().min(1.0).acos();
        let want = [
            ("height", -2e-3 * (s.position.z - z_d).abs()),
            ("attitude", -2e-4 * theta),
            ("velocity", -4e-5 * s.velocity.norm()),
            ("body_rate", -1e-5 * s.body_rates.norm()),
            ("action", -1e-4 * l2(&ut, &up)),
            ("success", if hovering { 10.0 } else { 0.0 }),
        ];
        let got = stabilization_reward(&s, &ut, &up, z_d, hovering, AttitudeError::GeodesicAngle, &sc);
        compare(&got, &want, &mut worst)?;
    }

    let tc = TrackingCoeffs::default();
    for _ in 0..TRANSITIONS_PER_TASK {
        let s = QuadState {
            attitude: random_quat(&mut rng),
            velocity: random_vec(&mut rng, 10.0),
            body_rates: random_vec(&mut rng, 4.0),
            ..QuadState::hover_at(random_vec(&mut rng, 5.0), &p)
        };
        let vd = random_vec(&mut rng, 10.0);
        let (ut, up) = (random_u(&mut rng), random_u(&mut rng));
        let want = [
            ("velocity", -2e-4 * (s.velocity - vd).norm()),
            ("body_rate", -1.2e-3 * s.body_rates.norm()),
            ("action", -1e-4 * l2(&ut, &up)),
        ];
        let got = tracking_reward(&s, &ut, &up, &vd, &tc);
        compare(&got, &want, &mut worst)?;
    }

    let stationary_err = (stationary - 0.025).abs();
    let crash_err = (crash + 10.0).abs();
    check(
        worst < REWARD_TOL && stationary_err < REWARD_TOL && crash_err < REWARD_TOL,
        format!(
            "{} transitions per task, worst component error {worst:.1e}; stationary racing r = {stationary} \
             (0.025); crash term = {crash} (-10); tolerance {REWARD_TOL:.0e}",
            TRANSITIONS_PER_TASK
        ),
    )
}

// 4

fn curriculum_thresholds() -> Outcome {
    let cfg = CurriculumConfig::default();
    let s0 = cfg.stabilization_initial_scale;
    let expect_scale = (s0 * cfg.stabilization_growth.powi(5)).min(cfg.stabilization_scale_cap);
    let expect_bounds: [f64; 3] =
        std::array::from_fn(|i| (cfg.tracking_initial_bounds[i] + 3.0).min(cfg.tracking_bound_caps[i]));
    let before_bounds: [f64; 3] =
        std::array::from_fn(|i| (cfg.tracking_initial_bounds[i] + 2.0).min(cfg.tracking_bound_caps[i]));

    // stepwise accumulation with a step that does not divide the interval
    let walk = |task: TaskId, total: u64| {
        let mut c = CurriculumState::initial(&cfg);
        let mut seen = 0;
        while seen < total {
            let n = 2048.min(total - seen);
            c = curriculum_update(&c, n, task, &cfg);
            seen += n;
        }
        c
    };
    let stab = walk(TaskId::Stabilization, 500_000);
    let stab_before = walk(TaskId::Stabilization, 499_999);
    let track = walk(TaskId::Tracking, 300_000);
    let track_before = walk(TaskId::Tracking, 299_999);
    let capped = CurriculumState::at(100_000_000, &cfg);

    let ok = stab.speed_scale == expect_scale
        && stab.level == 5
        && stab_before.level == 4
        && stab_before.speed_scale == s0 * cfg.stabilization_growth.powi(4)
        && track.speed_bounds == expect_bounds
        && track_before.speed_bounds == before_bounds
        && capped.speed_scale == cfg.stabilization_scale_cap
        && capped.speed_bounds == cfg.tracking_bound_caps;
    check(
        ok,
        format!(
            "500000 samples: scale {} = {s0}*1.1^5 (499999: level {}); 300000 samples: bounds {:?} \
             (299999: {:?}); caps {} {:?}; exact equality",
            stab.speed_scale, stab_before.level, track.speed_bounds, track_before.speed_bounds, capped.speed_scale,
            capped.speed_bounds
        ),
    )
}

// 5

const GAE_TOL: f64 = 1e-10;

fn gae_oracle(r: &[f64], v: &[f64], d: &[bool], boot: f64, g: f64, l: f64) -> Vec<f64> {
    let n = r.len();
    let next_v = |k: usize| if k + 1 < n { v[k + 1] } else { boot };
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut w = 1.0;
            for k in t..n {
                let live = if d[k] { 0.0 } else { 1.0 };
                sum += w * (r[k] + g * next_v(k) * live - v[k]);
                if d[k] {
                    break;
                }
                w *= g * l;
            }
            sum
        })
        .collect()
}

fn gae_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let r: Vec<f64> = (0..20).map(|_| rng.random_range(-5.0..5.0)).collect();
        let v: Vec<f64> = (0..20).map(|_| rng.random_range(-5.0..5.0)).collect();
        let d: Vec<bool> = (0..20).map(|_| rng.random_bool(0.15)).collect();
        let boot = rng.random_range(-5.0..5.0);
        let g = rng.random_range(0.9..1.0);
        let l = rng.random_range(0.8..1.0);
        let (adv, ret) = compute_gae(&r, &v, &d, boot, g, l).map_err(|e| e.to_string())?;
        let want = gae_oracle(&r, &v, &d, boot, g, l);
        for t in 0..20 {
            worst = worst.max((adv[t] - want[t]).abs());
            worst = worst.max((ret[t] - (want[t] + v[t])).abs());
        }
    }
    check(worst < GAE_TOL, format!("100 sequences of 20 steps, max error {worst:.1e} (<{GAE_TOL:.0e})"))
}

// 6

const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_BUDGET_S: f64 = 60.0;

fn small_widths() -> NetWidths {
    NetWidths { encoder_hidden: 8, embedding: 4, actor_hidden: 8, critic_hidden: 8 }
}

fn random_batch(rng: &mut ChaCha8Rng, task: TaskId, n: usize) -> (Array2<f64>, Array2<f64>) {
    let shared = Array2::from_shape_fn((n, SHARED_OBS_LEN), |_| rng.random_range(-1.5..1.5));
    let task_obs = Array2::from_shape_fn((n, task.task_obs_len(true)), |_| rng.random_range(-1.5..1.5));
    (shared, task_obs)
}

struct Probe {
    shared: Array2<f64>,
    task_obs: Array2<f64>,
    w_mean: Array2<f64>,
    w_value: Array2<f64>,
}

impl Probe {
    fn loss(&self, policy: &PolicyParams, task: TaskId) -> f64 {
        let pass = policy.forward_group(task, self.shared.clone(), self.task_obs.clone(), true).unwrap();
        (pass.mean() * &self.w_mean).sum() + (pass.value().unwrap() * &self.w_value).sum()
    }
}

type RoleFn = fn(&mut PolicyParams, TaskId) -> Option<&mut Mlp>;

fn role_error(policy: &PolicyParams, task: TaskId, probe: &Probe, role: RoleFn) -> Option<f64> {
    let mut grads = policy.zeros_like();
    let pass = policy.forward_group(task, probe.shared.clone(), probe.task_obs.clone(), true).unwrap();
    policy.backward_group(&pass, Some(probe.w_mean.clone()), Some(probe.w_value.clone()), &mut grads);
    let analytic: Vec<f64> = role(&mut grads, task)?.tensors().iter().flat_map(|t| t.iter().copied()).collect();

    let mut numeric = Vec::with_capacity(analytic.len());
    let mut work = policy.clone();
    let h = 1e-6;
    let n_tensors = role(&mut work, task)?.tensors().len();
    for ti in 0..n_tensors {
        let len = role(&mut work, task)?.tensors()[ti].len();
        for i in 0..len {
            let orig = role(&mut work, task)?.tensors()[ti][i];
            role(&mut work, task)?.tensors_mut()[ti][i] = orig + h;
            let up = probe.loss(&work, task);
            role(&mut work, task)?.tensors_mut()[ti][i] = orig - h;
            let down = probe.loss(&work, task);
            role(&mut work, task)?.tensors_mut()[ti][i] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    Some(diff / na.max(nn).max(1e-300))
}

fn gradient_checks() -> Outcome {
    let t0 = Instant::now();
    let roles: [(&str, RoleFn); 5] = [
        ("shared encoder", |p, _| p.shared_encoder.as_mut()),
        ("dynamics encoder", |p, t| p.dynamics_encoders.get_mut(&t)),
        ("task encoder", |p, t| p.task_encoders.get_mut(&t)),
        ("actor", |p, _| Some(&mut p.actor)),
        ("critic", |p, t| p.critics.get_mut(&t)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    for variant in ArchitectureVariant::ALL {
        for task in TaskId::ALL {
            let tasks = if variant == ArchitectureVariant::SingleTask { vec![task] } else { TaskId::ALL.to_vec() };
            let mut policy = PolicyParams::new(variant, &tasks, small_widths(), true, &mut rng).unwrap();
            // a larger output layer keeps the actor gradient well away from round-off
            for v in policy.actor.tensors_mut().into_iter().last().into_iter().flatten() {
                *v *= 30.0;
            }
            let (shared, task_obs) = random_batch(&mut rng, task, 6);
            let probe = Probe {
                shared,
                task_obs,
                w_mean: Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0)),
                w_value: Array2::from_shape_fn((6, 1), |_| rng.random_range(-1.0..1.0)),
            };
            for (name, role) in roles {
                if let Some(e) = role_error(&policy, task, &probe, role) {
                    let w = worst.entry(name).or_insert(0.0);
                    *w = w.max(e);
                }
            }
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let all = worst.len() == roles.len() && worst.values().all(|e| *e < GRAD_REL_TOL);
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    check(
        all && elapsed < GRAD_BUDGET_S,
        format!("all variants and tasks, relative L2 error: {detail} (<{GRAD_REL_TOL:.0e}); {elapsed:.1} s (<{GRAD_BUDGET_S} s)"),
    )
}

// 7

fn observation(rng: &mut ChaCha8Rng, task: TaskId) -> Observation {
    let mut task_specific: Vec<f64> = (0..task.base_obs_len()).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut hot = [0.0; 3];
    hot[task.index()] = 1.0;
    task_specific.extend(hot);
    Observation { shared: std::array::from_fn(|_| rng.random_range(-2.0..2.0)), task_specific, task }
}

fn widths_of(m: &Mlp) -> Vec<usize> {
    let mut w = vec![m.input_dim()];
    w.extend(m.layers().iter().map(|l| l.bias.len()));
    w
}

fn shape_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    let mut expect = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let tasks = TaskId::ALL;
    let ours = PolicyParams::new(ArchitectureVariant::Ours, &tasks, NetWidths::default(), true, &mut rng).unwrap();
    let enc = ours.shared_encoder.as_ref().unwrap();
    expect(enc.input_dim() == 19 && enc.output_dim() == 32, "shared encoder 19 -> 32");
    for t in tasks {
        expect(ours.task_encoders[&t].output_dim() == 32, "task embedding 32");
        expect(ours.critics[&t].input_dim() == 19 + t.task_obs_len(true), "critic input");
        expect(ours.critics[&t].output_dim() == 1, "critic output");
    }
    expect(
        [24, 4, 6].iter().zip(tasks).all(|(n, t)| t.base_obs_len() == *n),
        "task observation widths 24/4/6",
    );
    expect(widths_of(&ours.actor) == vec![64, 256, 256, 4], "actor 64-256-256-4");
    let mut inside = true;
    for _ in 0..200 {
        let t = tasks[rng.random_range(0..3)];
        let m = ours.act_mean(&observation(&mut rng, t)).unwrap();
        inside &= m.iter().all(|v| v.abs() < 1.0);
    }
    expect(inside, "mean action inside (-1, 1)");

    let sep = PolicyParams::new(ArchitectureVariant::Separate, &tasks, NetWidths::default(), true, &mut rng).unwrap();
    let mut sep_invariant = true;
    let mut ours_coupled = true;
    for t in tasks {
        let obs = observation(&mut rng, t);
        let mut moved = obs.clone();
        for v in &mut moved.shared {
            *v += rng.random_range(-1.0..1.0);
        }
        let (a, b) = (sep.encode(&obs).unwrap(), sep.encode(&moved).unwrap());
        sep_invariant &= a[32..] == b[32..] && a[..32] != b[..32];
        let (a, b) = (ours.encode(&obs).unwrap(), ours.encode(&moved).unwrap());
        ours_coupled &= a[32..] != b[32..];
    }
    expect(sep_invariant, "separate: task embedding ignores shared observation");
    expect(ours_coupled, "ours: task embedding sees shared observation");

    let ao = PolicyParams::new(ArchitectureVariant::ActorOnly, &tasks, NetWidths::default(), true, &mut rng).unwrap();
    let c = ao.parameter_set_counts();
    expect(
        ao.shared_encoder.is_none() && c.shared_encoders == 0 && c.dynamics_encoders == 3 && c.task_encoders == 3,
        "actor-only: no shared encoder",
    );
    let single =
        PolicyParams::new(ArchitectureVariant::SingleTask, &[TaskId::Tracking], NetWidths::default(), true, &mut rng)
            .unwrap();
    let c = single.parameter_set_counts();
    expect(c.task_encoders == 1 && c.critics == 1 && !single.serves(TaskId::Racing), "single-task: one task");

    let mut isolated = true;
    for t in tasks {
        let (shared, task_obs) = random_batch(&mut rng, t, 5);
        let pass = ours.forward_group(t, shared, task_obs, true).unwrap();
        let mut grads = ours.zeros_like();
        let d_value = Array2::from_elem((5, 1), 1.0);
        ours.backward_group(&pass, None, Some(d_value), &mut grads);
        for other in tasks {
            let nonzero = grads.critics[&other].tensors().iter().any(|x| x.iter().any(|v| *v != 0.0));
            isolated &= nonzero == (other == t);
            isolated &= grads.task_encoders[&other].tensors().iter().all(|x| x.iter().all(|v| *v == 0.0));
        }
        isolated &= grads.actor.tensors().iter().all(|x| x.iter().all(|v| *v == 0.0));
        isolated &= grads.shared_encoder.as_ref().unwrap().tensors().iter().all(|x| x.iter().all(|v| *v == 0.0));
    }
    expect(isolated, "critic gradients stay in their own task");

    check(
        failures.is_empty(),
        if failures.is_empty() {
            "widths 19/32/64/256x2/4, tanh output, separate/actor-only/single-task wiring, critic isolation".into()
        } else {
            format!("failed: {}", failures.join("; "))
        },
    )
}

// 8 and 9

/// Optimisation epochs per PPO update in the smoke runs.
const SMOKE_EPOCHS: usize = 4;
const SMOKE_SAMPLES: u64 = 1_000_000;
const SMOKE_SEEDS: [u64; 3] = [0, 1, 2];
const SMOKE_IMPROVEMENT: f64 = 0.5;
const SMOKE_SUCCESS: f64 = 0.5;
const SMOKE_EVAL_TRIALS: usize = 64;
const SMOKE_EVAL_SEED: u64 = 1234;
const MULTI_SAMPLES: u64 = 1_500_000;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn stabilization_smoke() -> Outcome {
    let mut env = EnvConfig::default();
    env.curriculum.enabled = false;
    env.curriculum.stabilization_initial_scale = 1.0;
    env.stabilization.initial_speed_limits = [2.0, 2.0, 2.0];
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in SMOKE_SEEDS {
        let cfg = TrainConfig { epochs: SMOKE_EPOCHS, total_samples: SMOKE_SAMPLES, seed, ..TrainConfig::default() };
        let mut trainer =
            Trainer::new(cfg, env.clone(), &[TaskId::Stabilization], ArchitectureVariant::Ours).map_err(|e| e.to_string())?;
        train(&mut trainer, None, |_, _| Ok(())).map_err(|e| e.to_string())?;
        let returns: Vec<f64> = trainer.episodes().iter().map(|e| e.episode_return).collect();
        if returns.len() < 200 {
            return Err(format!("seed {seed}: only {} episodes", returns.len()));
        }
        let first = mean(&returns[..100]);
        let last = mean(&returns[returns.len() - 100..]);
        let mut pilot = PolicyPilot { checkpoint: trainer.policy_checkpoint() };
        let ev = eval_stabilization(&mut pilot, &trainer.env_cfg, SMOKE_EVAL_TRIALS, SMOKE_EVAL_SEED, None)
            .map_err(|e| e.to_string())?;
        let seed_ok = last >= first + SMOKE_IMPROVEMENT * first.abs() && ev.success_rate >= SMOKE_SUCCESS;
        ok &= seed_ok;
        lines.push(format!("seed {seed}: return {first:.2} -> {last:.2}, success {:.3}", ev.success_rate));
    }
    check(
        ok,
        format!(
            "{} (need +{:.0}% of |first| and success >= {SMOKE_SUCCESS} over {SMOKE_EVAL_TRIALS} trials; \
             {SMOKE_SAMPLES} samples, {SMOKE_EPOCHS} epochs)",
            lines.join("; "),
            SMOKE_IMPROVEMENT * 100.0
        ),
    )
}

fn multitask_smoke() -> Outcome {
    let cfg = TrainConfig { epochs: SMOKE_EPOCHS, total_samples: MULTI_SAMPLES, seed: 0, ..TrainConfig::default() };
    let mut trainer =
        Trainer::new(cfg, EnvConfig::default(), &TaskId::ALL, ArchitectureVariant::Ours).map_err(|e| e.to_string())?;
    let metrics = train(&mut trainer, None, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let finite = metrics.iter().all(|m| {
        m.policy_loss.is_finite()
            && m.entropy.is_finite()
            && m.grad_norm.is_finite()
            && m.value_loss.values().all(|v| v.is_finite())
    });
    let total = trainer.samples() as f64;
    let mut ok = finite;
    let mut lines = Vec::new();
    for task in TaskId::ALL {
        let of_task: Vec<&EpisodeRecord> = trainer.episodes().iter().filter(|e| e.task == task).collect();
        let early: Vec<f64> =
            of_task.iter().filter(|e| (e.samples as f64) <= 0.1 * total).map(|e| e.episode_return).collect();
        let late: Vec<f64> =
            of_task.iter().filter(|e| (e.samples as f64) > 0.9 * total).map(|e| e.episode_return).collect();
        if early.is_empty() || late.is_empty() {
            ok = false;
            lines.push(format!("{task}: no episodes in a window"));
            continue;
        }
        let (a, b) = (mean(&early), mean(&late));
        ok &= b > a;
        lines.push(format!("{task} {a:.2} -> {b:.2}"));
    }
    check(
        ok,
        format!(
            "first vs last 10% of {MULTI_SAMPLES} samples: {}; losses finite: {finite}",
            lines.join(", ")
        ),
    )
}

// 10

const MGE_LIMIT: f64 = 0.05;
const E_V_TOL: f64 = 1e-6;

fn eval_oracles() -> Outcome {
    let cfg = EnvConfig::default();

    let mut racing_cfg = cfg.clone();
    racing_cfg.racing.horizon = 30.0;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let racing = eval_racing(&mut GateFollower::default(), &racing_cfg, 64, &mut rng, None).map_err(|e| e.to_string())?;
    let mge = racing.mean_gate_error.unwrap_or(f64::INFINITY);

    let stab = eval_stabilization(&mut HoverPilot::default(), &cfg, 64, 10, None).map_err(|e| e.to_string())?;
    let (th, tf) = (stab.t_half.unwrap_or(f64::NAN), stab.t_full.unwrap_or(f64::NAN));
    // below twice the hover speed the half-speed threshold lies under the hover threshold
    let ordered = stab
        .per_trial
        .iter()
        .filter(|t| t.initial_speed >= 2.0 * cfg.stabilization.hover_speed)
        .all(|t| match (t.t_half, t.t_full) {
            (Some(h), Some(f)) => h <= f,
            (_, None) => true,
            (None, Some(_)) => false,
        });

    let offset = Vec3::new(0.3, -1.2, 0.4);
    let mut prng = ChaCha8Rng::seed_from_u64(11);
    let rows: Vec<TraceRow> = (0..=500)
        .map(|k| {
            let vd = random_vec(&mut prng, 8.0);
            TraceRow {
                t: k as f64 * cfg.dt_ctrl,
                position: [0.0; 3],
                attitude: [1.0, 0.0, 0.0, 0.0],
                velocity: (vd + offset).into(),
                body_rates: [0.0; 3],
                u: [0.0; 4],
                reward: 0.0,
                desired_velocity: Some(vd.into()),
            }
        })
        .collect();
    let trace = EpisodeTrace {
        task: TaskId::Tracking,
        rows,
        reason: TerminationReason::Timeout,
        episode_return: 0.0,
        passes: Vec::new(),
    };
    let (sum, n) = velocity_error(&trace);
    let e_v = sum / n as f64;
    let e_v_err = (e_v - offset.norm()).abs();

    check(
        racing.success_rate == 1.0
            && mge < MGE_LIMIT
            && th.is_finite()
            && tf.is_finite()
            && th <= tf
            && ordered
            && e_v_err < E_V_TOL,
        format!(
            "gate follower SR {} MGE {mge:.4} m (<{MGE_LIMIT}) LT {:.2} s; hover t_half {th:.3} s <= t_full {tf:.3} s \
             (per trial: {ordered}); constant offset e_v error {e_v_err:.1e} (<{E_V_TOL:.0e})",
            racing.success_rate,
            racing.lap_time.unwrap_or(f64::NAN),
        ),
    )
}

// 11

const DETERMINISM_SAMPLES: u64 = 100_000;

fn determinism() -> Outcome {
    let cfg = TrainConfig {
        epochs: SMOKE_EPOCHS,
        total_samples: DETERMINISM_SAMPLES,
        checkpoint_interval: 5,
        seed: 11,
        ..TrainConfig::default()
    };
    let run = |dir: &std::path::Path| -> Result<(), String> {
        let mut t = Trainer::new(cfg.clone(), EnvConfig::default(), &TaskId::ALL, ArchitectureVariant::Ours)
            .map_err(|e| e.to_string())?;
        train(&mut t, Some(dir), |_, _| Ok(())).map_err(|e| e.to_string())?;
        Ok(())
    };
    let files = [METRICS_FILE, EPISODES_FILE, POLICY_FILE];
    let read = |dir: &std::path::Path| -> Result<Vec<Vec<u8>>, String> {
        files.iter().map(|f| fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"))).collect()
    };
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run(a.path())?;
    run(b.path())?;
    let first = read(a.path())?;
    let fresh_equal = first == read(b.path())?;

    let mut resumed = Trainer::load(&checkpoint_path(b.path(), 5)).map_err(|e| e.to_string())?;
    train(&mut resumed, Some(b.path()), |_, _| Ok(())).map_err(|e| e.to_string())?;
    let resumed_equal = first == read(b.path())?;
    let lines = String::from_utf8_lossy(&first[0]).lines().count();

    check(
        fresh_equal && resumed_equal && lines > 5,
        format!(
            "{DETERMINISM_SAMPLES} samples, {lines} metric lines: repeat run identical {fresh_equal}, \
             resumed from iteration 5 identical {resumed_equal} (byte comparison of metrics, episodes, policy)"
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "dynamics oracles", dynamics_oracles),
        (2, "geometry", geometry_suite),
        (3, "reward oracles", reward_oracles),
        (4, "curriculum thresholds", curriculum_thresholds),
        (5, "GAE equivalence", gae_equivalence),
        (6, "gradient checks", gradient_checks),
        (7, "architecture shapes", shape_suite),
        (8, "stabilization smoke training", stabilization_smoke),
        (9, "multi-task smoke training", multitask_smoke),
        (10, "evaluation metric oracles", eval_oracles),
        (11, "determinism and resume", determinism),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {id:>2} PASS {name} [{secs:.1} s]: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id:>2} FAIL {name} [{secs:.1} s]: {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
