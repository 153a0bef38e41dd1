//! Training runs, evaluation reports and the summary table.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use super::config::{EvalConfig, ExperimentConfig};
use super::eval::{eval_racing, eval_stabilization, eval_tracking, write_traces, RacingEval, StabilizationEval, TrackingEval};
use super::pilot::{Pilot, PolicyPilot};
use super::HarnessError;
use crate::nets::{ArchitectureVariant, PolicyCheckpoint};
use crate::tasks::{EnvConfig, TaskId};
use crate::trainer::{train, TrainError, Trainer};

pub const REPORT_SCHEMA: u32 = 1;
pub const EVAL_FILE: &str = "eval.json";
pub const PERIODIC_EVAL_FILE: &str = "evals.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub variant: ArchitectureVariant,
    pub seed: u64,
    pub samples: u64,
    pub racing: Option<RacingEval>,
    pub stabilization: Option<StabilizationEval>,
    pub tracking: Option<TrackingEval>,
}

/// Evaluates every task in `tasks` that the policy serves.
pub fn evaluate_policy(
    ckpt: &PolicyCheckpoint,
    env_cfg: &EnvConfig,
    eval: &EvalConfig,
    tasks: &[TaskId],
    seed: u64,
    samples: u64,
    trace_dir: Option<&Path>,
) -> Result<EvalReport, HarnessError> {
    let mut pilot = PolicyPilot { checkpoint: ckpt.clone() };
    evaluate_pilot(&mut pilot, ckpt.params.variant, env_cfg, eval, tasks, seed, samples, trace_dir, |t| {
        ckpt.params.serves(t)
    })
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_pilot(
    pilot: &mut dyn Pilot,
    variant: ArchitectureVariant,
    env_cfg: &EnvConfig,
    eval: &EvalConfig,
    tasks: &[TaskId],
    seed: u64,
    samples: u64,
    trace_dir: Option<&Path>,
    serves: impl Fn(TaskId) -> bool,
) -> Result<EvalReport, HarnessError> {
    let mut report =
        EvalReport { schema: REPORT_SCHEMA, variant, seed, samples, racing: None, stabilization: None, tracking: None };
    let record = trace_dir.is_some() && eval.trajectories;
    for &task in tasks.iter().filter(|t| serves(**t)) {
        let mut traces = Vec::new();
        let sink = if record { Some(&mut traces) } else { None };
        match task {
            TaskId::Racing => {
                let mut cfg = env_cfg.clone();
                cfg.racing.horizon = eval.racing_horizon;
                let mut rng = ChaCha8Rng::seed_from_u64(eval.seed);
                report.racing = Some(eval_racing(pilot, &cfg, eval.racing_starts, &mut rng, sink)?);
            }
            TaskId::Stabilization => {
                report.stabilization =
                    Some(eval_stabilization(pilot, env_cfg, eval.stabilization_trials, eval.seed, sink)?);
            }
            TaskId::Tracking => {
                report.tracking = Some(eval_tracking(pilot, env_cfg, eval.tracking_trials, eval.seed, sink)?);
            }
        }
        if let (true, Some(dir)) = (record, trace_dir) {
            write_traces(&dir.join(format!("trajectories-{task}.csv")), &traces)?;
        }
    }
    Ok(report)
}

fn run_dir(out: &Path, seed: u64, single: Option<TaskId>) -> PathBuf {
    let d = out.join(format!("seed-{seed}"));
    match single {
        Some(t) => d.join(t.name()),
        None => d,
    }
}

/// Trains (or resumes) one run into `dir`, evaluating periodically and at the end.
pub fn run_training(
    cfg: &ExperimentConfig,
    trainer: &mut Trainer,
    dir: &Path,
    seed: u64,
) -> Result<EvalReport, HarnessError> {
    fs::create_dir_all(dir)?;
    let interval = cfg.eval.interval;
    let tasks = trainer.tasks.clone();
    let periodic = dir.join(PERIODIC_EVAL_FILE);
    let periodic_cfg = EvalConfig { trajectories: false, ..cfg.eval.clone() };
    train(trainer, Some(dir), |t, _| {
        if interval > 0 && t.iteration() % interval == 0 && !t.is_finished() {
            let r = evaluate_policy(&t.policy_checkpoint(), &t.env_cfg, &periodic_cfg, &tasks, seed, t.samples(), None)
                .map_err(|e| TrainError::Config(format!("periodic evaluation: {e}")))?;
            let mut f = fs::OpenOptions::new().create(true).append(true).open(&periodic)?;
            writeln!(f, "{}", serde_json::to_string(&r)?)?;
        }
        Ok(())
    })?;
    let report = evaluate_policy(
        &trainer.policy_checkpoint(),
        &trainer.env_cfg,
        &cfg.eval,
        &tasks,
        seed,
        trainer.samples(),
        Some(dir),
    )?;
    fs::write(dir.join(EVAL_FILE), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Trains and evaluates every seed (and, for single-task networks, every task
/// separately), then writes `summary.csv` and `summary.txt`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    for &seed in &cfg.seeds {
        let groups: Vec<(Option<TaskId>, Vec<TaskId>)> = if cfg.variant == ArchitectureVariant::SingleTask {
            cfg.tasks.iter().map(|&t| (Some(t), vec![t])).collect()
        } else {
            vec![(None, cfg.tasks.clone())]
        };
        for (single, tasks) in groups {
            let dir = run_dir(out, seed, single);
            log::info!("training {} seed {seed} tasks {:?} into {}", cfg.variant, tasks, dir.display());
            let tc = crate::trainer::TrainConfig { seed, ..cfg.train.clone() };
            let mut trainer = Trainer::new(tc, cfg.env.clone(), &tasks, cfg.variant)?;
            run_training(cfg, &mut trainer, &dir, seed)?;
        }
    }
    summarize(out)
}

/// One line of the summary table: one variant and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: ArchitectureVariant,
    pub seed: u64,
    pub samples: u64,
    pub racing_sr: Option<f64>,
    pub racing_mge: Option<f64>,
    pub racing_lt: Option<f64>,
    pub stab_t_half: Option<f64>,
    pub stab_t_full: Option<f64>,
    pub stab_success: Option<f64>,
    pub track_e_v: Option<f64>,
}

impl SummaryRow {
    fn empty(variant: ArchitectureVariant, seed: u64) -> Self {
        Self {
            variant,
            seed,
            samples: 0,
            racing_sr: None,
            racing_mge: None,
            racing_lt: None,
            stab_t_half: None,
            stab_t_full: None,
            stab_success: None,
            track_e_v: None,
        }
    }

    /// Folds one report in. Gate error and lap time stay absent unless a lap was completed.
    pub fn absorb(&mut self, r: &EvalReport) {
        self.samples = self.samples.max(r.samples);
        if let Some(x) = &r.racing {
            self.racing_sr = Some(x.success_rate);
            if x.completed > 0 {
                self.racing_mge = x.mean_gate_error;
                self.racing_lt = x.lap_time;
            }
        }
        if let Some(x) = &r.stabilization {
            self.stab_t_half = x.t_half;
            self.stab_t_full = x.t_full;
            self.stab_success = Some(x.success_rate);
        }
        if let Some(x) = &r.tracking {
            self.track_e_v = Some(x.e_v);
        }
    }
}

fn find_files(root: &Path, name: &str, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(root)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            find_files(&p, name, out)?;
        } else if p.file_name().is_some_and(|f| f == name) {
            out.push(p);
        }
    }
    Ok(())
}

/// Every file called `name` below `root`, in path order.
pub fn find_all(root: &Path, name: &str) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    find_files(root, name, &mut out)?;
    Ok(out)
}

/// Rebuilds the summary from the `eval.json` files below `out`.
pub fn summarize(out: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    let mut rows: BTreeMap<(String, u64), SummaryRow> = BTreeMap::new();
    for p in find_all(out, EVAL_FILE)? {
        let r: EvalReport = serde_json::from_str(&fs::read_to_string(&p)?)?;
        if r.schema != REPORT_SCHEMA {
            return Err(HarnessError::Schema { file: p.display().to_string(), found: r.schema });
        }
        rows.entry((r.variant.to_string(), r.seed)).or_insert_with(|| SummaryRow::empty(r.variant, r.seed)).absorb(&r);
    }
    let rows: Vec<SummaryRow> = rows.into_values().collect();
    write_summary(out, &rows)?;
    Ok(rows)
}

pub const SUMMARY_HEADER: [&str; 11] = [
    "schema", "variant", "seed", "samples", "racing_sr", "racing_mge", "racing_lt", "stab_t_half", "stab_t_full",
    "stab_success", "track_e_v",
];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_summary(out: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            REPORT_SCHEMA.to_string(),
            r.variant.to_string(),
            r.seed.to_string(),
            r.samples.to_string(),
            opt(r.racing_sr),
            opt(r.racing_mge),
            opt(r.racing_lt),
            opt(r.stab_t_half),
            opt(r.stab_t_full),
            opt(r.stab_success),
            opt(r.track_e_v),
        ])?;
    }
    w.flush()?;
    fs::write(out.join("summary.txt"), format_summary(rows))?;
    Ok(())
}

/// Fixed-width table. Racing cells read `crash` when no lap was completed;
/// `-` marks tasks that were not evaluated.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>5} {:>10} {:>18} {:>8} {:>8} {:>8} {:>8}",
        "variant", "seed", "samples", "racing SR/MGE[m]", "LT[s]", "t_half", "t_full", "e_v"
    );
    let num = |x: Option<f64>, missing: &str| x.map_or(missing.to_string(), |v| format!("{v:.3}"));
    for r in rows {
        let racing = match r.racing_sr {
            None => "-".to_string(),
            Some(sr) => format!("{:.0}% / {}", sr * 100.0, num(r.racing_mge, "crash")),
        };
        let lt = if r.racing_sr.is_some() { num(r.racing_lt, "crash") } else { "-".into() };
        let stab = |x| if r.stab_success.is_some() { num(x, "fail") } else { "-".into() };
        let _ = writeln!(
            s,
            "{:<12} {:>5} {:>10} {:>18} {:>8} {:>8} {:>8} {:>8}",
            r.variant.to_string(),
            r.seed,
            r.samples,
            racing,
            lt,
            stab(r.stab_t_half),
            stab(r.stab_t_full),
            num(r.track_e_v, "-"),
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crash_cells() {
        let mut row = SummaryRow::empty(ArchitectureVariant::Separate, 3);
        row.absorb(&EvalReport {
            schema: REPORT_SCHEMA,
            variant: ArchitectureVariant::Separate,
            seed: 3,
            samples: 10,
            racing: Some(RacingEval {
                trials: 64,
                completed: 0,
                crashes: 64,
                success_rate: 0.0,
                mean_gate_error: Some(0.3),
                lap_time: None,
            }),
            stabilization: None,
            tracking: Some(TrackingEval { trials: 1, crashes: 0, e_v: 0.5 }),
        });
        assert_eq!(row.racing_mge, None);
        let text = format_summary(&[row]);
        assert!(text.contains("0% / crash"));
        assert!(text.contains("0.500"));
    }
}
