use std::fs;
use std::path::Path;

use mtquad_core::harness::experiment::EVAL_FILE;
use mtquad_core::harness::{evaluate_policy, export_plots, run_experiment, summarize, EvalReport, ExperimentConfig};
use mtquad_core::nets::load_policy;
use mtquad_core::trainer::run::{checkpoint_path, EPISODES_FILE, METRICS_FILE, POLICY_FILE};
use mtquad_core::HarnessError;

const TINY: &str = r#"
schema = 1
name = "tiny"
variant = "ours"
seeds = [3]

[train]
rollout_length = 16
envs_per_task = 2
minibatch_size = 32
epochs = 1
total_samples = 200
checkpoint_interval = 1

[train.widths]
encoder_hidden = 8
embedding = 4
actor_hidden = 8
critic_hidden = 8

[eval]
racing_starts = 2
racing_horizon = 1.0
stabilization_trials = 2
tracking_trials = 2
interval = 1
"#;

fn tiny(variant: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&TINY.replace("\"ours\"", &format!("\"{variant}\"")), None).unwrap()
}

fn exists(dir: &Path, names: &[&str]) {
    for n in names {
        assert!(dir.join(n).exists(), "missing {}", dir.join(n).display());
    }
}

#[test]
fn experiment_writes_every_artifact() {
    let out = tempfile::tempdir().unwrap();
    let rows = run_experiment(&tiny("ours"), out.path()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].seed, 3);
    assert!(rows[0].samples >= 200);
    assert!(rows[0].racing_sr.is_some() && rows[0].stab_success.is_some() && rows[0].track_e_v.is_some());

    exists(out.path(), &["config.toml", "summary.csv", "summary.txt"]);
    let run = out.path().join("seed-3");
    exists(
        &run,
        &[
            METRICS_FILE,
            EPISODES_FILE,
            POLICY_FILE,
            EVAL_FILE,
            "evals.jsonl",
            "trajectories-racing.csv",
            "trajectories-stabilization.csv",
            "trajectories-tracking.csv",
        ],
    );
    assert!(checkpoint_path(&run, 0).exists());
    assert!(checkpoint_path(&run, 1).exists());

    let saved = ExperimentConfig::load(&out.path().join("config.toml")).unwrap();
    assert_eq!(saved.train.total_samples, 200);

    // the written report is reproducible from the saved policy
    let report: EvalReport = serde_json::from_str(&fs::read_to_string(run.join(EVAL_FILE)).unwrap()).unwrap();
    let policy = load_policy(&run.join(POLICY_FILE)).unwrap();
    let again = evaluate_policy(&policy, &saved.env, &saved.eval, &saved.tasks, 3, report.samples, None).unwrap();
    assert_eq!(again, report);

    assert_eq!(summarize(out.path()).unwrap(), rows);

    let plots = out.path().join("plots");
    let written = export_plots(out.path(), &plots).unwrap();
    assert!(written.len() >= 5);
    let curves = fs::read_to_string(plots.join("learning_curves.csv")).unwrap();
    assert!(curves.starts_with("run,iteration,samples,task,task_samples,mean_return,level"));
}

#[test]
fn single_task_variant_trains_each_task_separately() {
    let mut cfg = tiny("single-task");
    cfg.tasks = vec![mtquad_core::TaskId::Racing, mtquad_core::TaskId::Tracking];
    cfg.eval.interval = 0;
    let out = tempfile::tempdir().unwrap();
    let rows = run_experiment(&cfg, out.path()).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].racing_sr.is_some() && rows[0].track_e_v.is_some());
    assert!(rows[0].stab_success.is_none());
    exists(&out.path().join("seed-3"), &["racing/policy.json", "tracking/policy.json"]);
    assert!(!out.path().join("seed-3/stabilization").exists());
}

#[test]
fn config_errors_name_the_field() {
    let text = TINY.replace("epochs = 1", "epochs = \"one\"");
    match ExperimentConfig::parse(&text, None) {
        Err(HarnessError::Config { path, .. }) => assert_eq!(path, "train.epochs"),
        other => panic!("{other:?}"),
    }
    let text = TINY.replace("variant = \"ours\"", "variant = \"shared\"");
    assert!(matches!(ExperimentConfig::parse(&text, None), Err(HarnessError::Config { path, .. }) if path == "variant"));
}

#[test]
fn relative_track_file_resolves_against_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("line.toml"),
        "schema = 1\nname = \"line\"\n[[gates]]\ncenter = [0.0, 0.0, 2.0]\nyaw_deg = 0.0\n\
         [[gates]]\ncenter = [6.0, 0.0, 2.0]\nyaw_deg = 0.0\n",
    )
    .unwrap();
    let cfg_path = dir.path().join("exp.toml");
    fs::write(&cfg_path, "schema = 1\n[env.racing]\ntrack_file = \"line.toml\"\n").unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.env.track.name, "line");
    assert_eq!(cfg.env.track.len(), 2);
}
