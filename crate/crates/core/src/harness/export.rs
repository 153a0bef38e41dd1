//! CSV exports for learning curves and trajectories.

use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::find_all;
use super::HarnessError;
use crate::trainer::run::{EPISODES_FILE, METRICS_FILE};
use crate::trainer::{EpisodeRecord, IterationMetrics};

fn run_label(root: &Path, file: &Path) -> String {
    let dir = file.parent().unwrap_or(root);
    let rel = dir.strip_prefix(root).unwrap_or(dir).display().to_string();
    if rel.is_empty() {
        ".".into()
    } else {
        rel
    }
}

/// Writes `learning_curves.csv` (mean return per iteration and task),
/// `episode_returns.csv` (every finished episode) and copies trajectory files
/// from every run below `root` into `out`. Returns the written paths.
pub fn export_plots(root: &Path, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();

    let path = out.join("learning_curves.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["run", "iteration", "samples", "task", "task_samples", "mean_return", "level"])?;
    for file in find_all(root, METRICS_FILE)? {
        let run = run_label(root, &file);
        for line in fs::read_to_string(&file)?.lines().filter(|l| !l.trim().is_empty()) {
            let m: IterationMetrics = serde_json::from_str(line)?;
            for (task, ret) in &m.mean_return {
                let Some(ret) = ret else { continue };
                let level = m.curriculum.get(task).map_or(0, |c| c.level);
                w.write_record([
                    run.clone(),
                    m.iteration.to_string(),
                    m.samples.to_string(),
                    task.to_string(),
                    m.task_samples.get(task).copied().unwrap_or(0).to_string(),
                    ret.to_string(),
                    level.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    written.push(path);

    let path = out.join("episode_returns.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["run", "samples", "task", "episode_return", "length", "reason"])?;
    for file in find_all(root, EPISODES_FILE)? {
        let run = run_label(root, &file);
        let mut rdr = csv::Reader::from_path(&file)?;
        for rec in rdr.deserialize() {
            let e: EpisodeRecord = rec?;
            w.write_record([
                run.clone(),
                e.samples.to_string(),
                e.task.to_string(),
                e.episode_return.to_string(),
                e.length.to_string(),
                format!("{:?}", e.reason),
            ])?;
        }
    }
    w.flush()?;
    written.push(path);

    for task in ["racing", "stabilization", "tracking"] {
        for file in find_all(root, &format!("trajectories-{task}.csv"))? {
            if file.starts_with(out) {
                continue;
            }
            let label = run_label(root, &file).replace(['/', '\\'], "_");
            let dest = out.join(format!("trajectories-{task}-{label}.csv"));
            fs::copy(&file, &dest)?;
            written.push(dest);
        }
    }
    Ok(written)
}
