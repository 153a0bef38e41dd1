use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};

use mtquad_core::harness::experiment::{format_summary, run_training, write_summary, EVAL_FILE};
use mtquad_core::harness::{
    evaluate_pilot, evaluate_policy, export_plots, run_experiment, summarize, ConstantPilot, ExperimentConfig,
    GateFollower, HoverPilot, Pilot, VelocityPilot, DEFAULT_CONFIG,
};
use mtquad_core::nets::load_policy;
use mtquad_core::{ArchitectureVariant, TaskId, Trainer};

#[derive(Debug, Parser)]
#[command(name = "mtquad", version, about = "Multi-task reinforcement learning for quadrotor control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (TOML). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// ours | actor-only | separate | single-task
    #[arg(long)]
    variant: Option<ArchitectureVariant>,
    /// Restricts the run to these tasks (repeatable).
    #[arg(long = "task")]
    tasks: Vec<TaskId>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Trains every configured seed, or resumes one run from a full checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Full trainer checkpoint to resume from.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluates a saved policy.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Policy file (`policy.json`) or full trainer checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Flies the scripted reference controllers and writes their trajectories.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Replaces the scripted controllers with a constant action.
        #[arg(long, num_args = 4, allow_negative_numbers = true)]
        constant: Option<Vec<f64>>,
    },
    /// Collects learning curves and trajectories from a run directory into CSV files.
    ExportPlots {
        /// Run directory written by `train`.
        #[arg(long, default_value = "runs")]
        runs: PathBuf,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
    /// Prints the default configuration with every key spelled out.
    DefaultConfig,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::parse(DEFAULT_CONFIG, None)?,
    };
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
        cfg.train.seed = s;
    }
    if let Some(v) = common.variant {
        cfg.variant = v;
    }
    if !common.tasks.is_empty() {
        cfg.tasks = common.tasks.clone();
    }
    Ok(cfg)
}

fn print_summary(out: &Path) -> Result<()> {
    let rows = summarize(out)?;
    write_summary(out, &rows)?;
    print!("{}", format_summary(&rows));
    Ok(())
}

fn train(common: &Common, checkpoint: Option<&Path>) -> Result<()> {
    let cfg = load_config(common)?;
    match checkpoint {
        None => {
            let rows = run_experiment(&cfg, &common.out)?;
            print!("{}", format_summary(&rows));
        }
        Some(ckpt) => {
            let mut trainer = Trainer::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            // checkpoints live in <run>/checkpoints/
            let dir = ckpt
                .parent()
                .and_then(Path::parent)
                .map(Path::to_path_buf)
                .unwrap_or_else(|| common.out.clone());
            let seed = trainer.cfg.seed;
            log::info!("resuming at iteration {} into {}", trainer.iteration(), dir.display());
            let report = run_training(&cfg, &mut trainer, &dir, seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn eval(common: &Common, checkpoint: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    let (ckpt, samples) = match load_policy(checkpoint) {
        Ok(p) => (p, 0),
        Err(policy_err) => match Trainer::load(checkpoint) {
            Ok(t) => (t.policy_checkpoint(), t.samples()),
            Err(_) => return Err(policy_err).with_context(|| format!("loading {}", checkpoint.display())),
        },
    };
    let seed = common.seed.unwrap_or(cfg.eval.seed);
    fs::create_dir_all(&common.out)?;
    let report = evaluate_policy(&ckpt, &cfg.env, &cfg.eval, &cfg.tasks, seed, samples, Some(&common.out))?;
    fs::write(common.out.join(EVAL_FILE), serde_json::to_string_pretty(&report)?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn simulate(common: &Common, constant: Option<&[f64]>) -> Result<()> {
    let cfg = load_config(common)?;
    fs::create_dir_all(&common.out)?;
    let seed = common.seed.unwrap_or(cfg.eval.seed);
    let mut reports = Vec::new();
    for &task in &cfg.tasks {
        let mut pilot: Box<dyn Pilot> = match (constant, task) {
            (Some(u), _) => {
                let Ok(u) = <[f64; 4]>::try_from(u) else { bail!("--constant takes four values") };
                Box::new(ConstantPilot(u))
            }
            (None, TaskId::Racing) => Box::new(GateFollower::default()),
            (None, TaskId::Stabilization) => Box::new(HoverPilot::default()),
            (None, TaskId::Tracking) => Box::new(VelocityPilot::default()),
        };
        let report = evaluate_pilot(
            pilot.as_mut(),
            cfg.variant,
            &cfg.env,
            &cfg.eval,
            &[task],
            seed,
            0,
            Some(&common.out),
            |_| true,
        )?;
        reports.push(report);
    }
    let text = serde_json::to_string_pretty(&reports)?;
    fs::write(common.out.join("simulate.json"), &text)?;
    println!("{text}");
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Train { common, checkpoint } => {
            train(common, checkpoint.as_deref())?;
            if checkpoint.is_some() {
                print_summary(&common.out).ok();
            }
        }
        Command::Eval { common, checkpoint } => eval(common, checkpoint)?,
        Command::Simulate { common, constant } => simulate(common, constant.as_deref())?,
        Command::ExportPlots { runs, out } => {
            for p in export_plots(runs, out)? {
                println!("{}", p.display());
            }
        }
        Command::DefaultConfig => print!("{DEFAULT_CONFIG}"),
    }
    Ok(())
}
