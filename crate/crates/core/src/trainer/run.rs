//! Training loop, metrics and resumable checkpoints.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::rollout::{collect_rollouts, Collector, EpisodeRecord};
use super::{ppo_update, Adam, TrainConfig, TrainError};
use crate::nets::{ArchitectureVariant, ObsNormalizer, PolicyCheckpoint, PolicyParams};
use crate::tasks::env::make_envs;
use crate::tasks::{CurriculumState, Env, EnvConfig, TaskId, Track};

pub const TRAIN_SCHEMA: u32 = 1;
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const POLICY_FILE: &str = "policy.json";

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub schema: u32,
    pub iteration: u64,
    pub samples: u64,
    pub task_samples: BTreeMap<TaskId, u64>,
    pub episodes: BTreeMap<TaskId, usize>,
    /// Mean return of episodes finished during this iteration.
    pub mean_return: BTreeMap<TaskId, Option<f64>>,
    pub policy_loss: f64,
    pub value_loss: BTreeMap<TaskId, f64>,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub value_grad_norm: f64,
    pub log_std: [f64; 4],
    pub curriculum: BTreeMap<TaskId, CurriculumState>,
}

/// Complete training state. Restoring it continues the run bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub env_cfg: EnvConfig,
    track: Track,
    pub variant: ArchitectureVariant,
    pub tasks: Vec<TaskId>,
    pub policy: PolicyParams,
    pub normalizer: ObsNormalizer,
    adam: Adam,
    envs: Vec<Env>,
    curricula: BTreeMap<TaskId, CurriculumState>,
    rng: ChaCha8Rng,
    samples: u64,
    task_samples: BTreeMap<TaskId, u64>,
    iteration: u64,
    episodes: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainCheckpoint {
    pub schema: u32,
    pub trainer: Trainer,
}

impl Trainer {
    pub fn new(
        cfg: TrainConfig,
        env_cfg: EnvConfig,
        tasks: &[TaskId],
        variant: ArchitectureVariant,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        let mut tasks = tasks.to_vec();
        tasks.sort();
        tasks.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let policy = PolicyParams::new(variant, &tasks, cfg.widths.clone(), env_cfg.one_hot, &mut rng)?;
        let normalizer =
            ObsNormalizer::new(&tasks, env_cfg.one_hot, cfg.normalize_observations, cfg.observation_clip);
        let adam = Adam::new(&policy.tensors());
        let curricula: BTreeMap<TaskId, CurriculumState> =
            tasks.iter().map(|&t| (t, CurriculumState::initial(&env_cfg.curriculum))).collect();
        let mut envs = make_envs(&tasks, cfg.envs_per_task, cfg.seed);
        for e in &mut envs {
            e.reset(&env_cfg, &curricula[&e.task()]);
        }
        Ok(Self {
            track: env_cfg.track.clone(),
            cfg,
            env_cfg,
            variant,
            task_samples: tasks.iter().map(|&t| (t, 0)).collect(),
            tasks,
            policy,
            normalizer,
            adam,
            envs,
            curricula,
            rng,
            samples: 0,
            iteration: 0,
            episodes: Vec::new(),
        })
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn episodes(&self) -> &[EpisodeRecord] {
        &self.episodes
    }

    pub fn curricula(&self) -> &BTreeMap<TaskId, CurriculumState> {
        &self.curricula
    }

    pub fn is_finished(&self) -> bool {
        self.samples >= self.cfg.total_samples
    }

    /// Parameters and frozen normalisation statistics for evaluation.
    pub fn policy_checkpoint(&self) -> PolicyCheckpoint {
        PolicyCheckpoint::new(self.policy.clone(), self.normalizer.clone())
    }

    /// Collect, estimate advantages, update.
    pub fn iterate(&mut self) -> Result<IterationMetrics, TrainError> {
        let first_episode = self.episodes.len();
        let mut buffer = {
            let mut c = Collector {
                envs: &mut self.envs,
                env_cfg: &self.env_cfg,
                normalizer: &mut self.normalizer,
                curricula: &mut self.curricula,
                rng: &mut self.rng,
                samples: &mut self.samples,
                episodes: &mut self.episodes,
            };
            collect_rollouts(&self.policy, &mut c, &self.cfg)?
        };
        for (t, n) in &buffer.task_counts {
            *self.task_samples.entry(*t).or_default() += *n as u64;
        }
        buffer.compute_advantages(&self.cfg)?;
        let stats = ppo_update(&mut self.policy, &mut self.adam, &buffer, &self.cfg, &mut self.rng)?;
        self.iteration += 1;

        let mut episodes = BTreeMap::new();
        let mut mean_return = BTreeMap::new();
        for &t in &self.tasks {
            let rs: Vec<f64> = self.episodes[first_episode..]
                .iter()
                .filter(|e| e.task == t)
                .map(|e| e.episode_return)
                .collect();
            episodes.insert(t, rs.len());
            mean_return.insert(t, (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64));
        }
        Ok(IterationMetrics {
            schema: TRAIN_SCHEMA,
            iteration: self.iteration,
            samples: self.samples,
            task_samples: self.task_samples.clone(),
            episodes,
            mean_return,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
            clip_fraction: stats.clip_fraction,
            grad_norm: stats.grad_norm,
            value_grad_norm: stats.value_grad_norm,
            log_std: self.policy.log_std,
            curriculum: self.curricula.clone(),
        })
    }

    pub fn to_checkpoint(&self) -> TrainCheckpoint {
        TrainCheckpoint { schema: TRAIN_SCHEMA, trainer: self.clone() }
    }

    pub fn to_json(&self) -> Result<String, TrainError> {
        Ok(serde_json::to_string(&self.to_checkpoint())?)
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let ckpt: TrainCheckpoint = serde_json::from_str(text)?;
        if ckpt.schema != TRAIN_SCHEMA {
            return Err(TrainError::Schema { expected: TRAIN_SCHEMA, found: ckpt.schema });
        }
        let mut t = ckpt.trainer;
        t.env_cfg.track = t.track.clone();
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

pub fn checkpoint_path(out: &Path, iteration: u64) -> std::path::PathBuf {
    out.join("checkpoints").join(format!("iter-{iteration:06}.json"))
}

/// Drops log lines written after the checkpoint being resumed from.
fn truncate_logs(out: &Path, trainer: &Trainer) -> Result<(), TrainError> {
    let metrics = out.join(METRICS_FILE);
    if metrics.exists() {
        let kept: Vec<String> = BufReader::new(File::open(&metrics)?)
            .lines()
            .filter_map(Result::ok)
            .filter(|l| {
                serde_json::from_str::<IterationMetrics>(l).is_ok_and(|m| m.iteration <= trainer.iteration)
            })
            .collect();
        fs::write(&metrics, kept.iter().map(|l| format!("{l}\n")).collect::<String>())?;
    }
    let episodes = out.join(EPISODES_FILE);
    if episodes.exists() {
        let mut rdr = csv::Reader::from_path(&episodes).map_err(csv_io)?;
        let rows: Vec<EpisodeRecord> =
            rdr.deserialize().filter_map(Result::ok).filter(|e: &EpisodeRecord| e.samples <= trainer.samples).collect();
        let mut w = csv::Writer::from_path(&episodes).map_err(csv_io)?;
        for r in rows {
            w.serialize(r).map_err(csv_io)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn csv_io(e: csv::Error) -> TrainError {
    TrainError::Io(std::io::Error::other(e))
}

/// Runs `trainer` to `cfg.total_samples`. With an output directory, writes the
/// metrics log, the episode log, periodic full checkpoints and the final
/// policy. `on_iteration` sees every metrics line as it is produced.
pub fn train(
    trainer: &mut Trainer,
    out: Option<&Path>,
    mut on_iteration: impl FnMut(&Trainer, &IterationMetrics) -> Result<(), TrainError>,
) -> Result<Vec<IterationMetrics>, TrainError> {
    let mut metrics_w = None;
    let mut episodes_w = None;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        truncate_logs(dir, trainer)?;
        let m = OpenOptions::new().create(true).append(true).open(dir.join(METRICS_FILE))?;
        metrics_w = Some(BufWriter::new(m));
        let path = dir.join(EPISODES_FILE);
        let fresh = !path.exists() || fs::metadata(&path)?.len() == 0;
        let e = OpenOptions::new().create(true).append(true).open(&path)?;
        episodes_w = Some(csv::WriterBuilder::new().has_headers(fresh).from_writer(e));
        if trainer.iteration == 0 {
            trainer.save(&checkpoint_path(dir, 0))?;
        }
    }
    let mut log = Vec::new();
    while !trainer.is_finished() {
        let first_episode = trainer.episodes.len();
        let m = match trainer.iterate() {
            Ok(m) => m,
            Err(e @ TrainError::NonFiniteLoss { .. }) => {
                if let Some(dir) = out {
                    trainer.save(&dir.join("checkpoints").join("nonfinite.json"))?;
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        if let Some(w) = metrics_w.as_mut() {
            writeln!(w, "{}", serde_json::to_string(&m)?)?;
            w.flush()?;
        }
        if let Some(w) = episodes_w.as_mut() {
            for e in &trainer.episodes[first_episode..] {
                w.serialize(e).map_err(csv_io)?;
            }
            w.flush()?;
        }
        if let Some(dir) = out {
            let every = trainer.cfg.checkpoint_interval;
            if trainer.is_finished() || (every > 0 && trainer.iteration % every == 0) {
                trainer.save(&checkpoint_path(dir, trainer.iteration))?;
            }
        }
        on_iteration(trainer, &m)?;
        log.push(m);
    }
    if let Some(dir) = out {
        crate::nets::save_policy(&dir.join(POLICY_FILE), &trainer.policy_checkpoint())?;
    }
    Ok(log)
}
