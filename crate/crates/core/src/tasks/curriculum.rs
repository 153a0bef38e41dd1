//! Sample-count driven difficulty schedules.

use serde::{Deserialize, Serialize};

use super::TaskId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub enabled: bool,
    /// Samples per curriculum level.
    pub interval: u64,
    pub stabilization_initial_scale: f64,
    pub stabilization_growth: f64,
    pub stabilization_scale_cap: f64,
    /// m/s per axis
    pub tracking_initial_bounds: [f64; 3],
    pub tracking_bound_step: f64,
    pub tracking_bound_caps: [f64; 3],
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            interval: 100_000,
            stabilization_initial_scale: 0.25,
            stabilization_growth: 1.1,
            stabilization_scale_cap: 1.0,
            tracking_initial_bounds: [3.0, 3.0, 1.0],
            tracking_bound_step: 1.0,
            tracking_bound_caps: [15.0, 15.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub samples_seen: u64,
    pub level: u64,
    pub speed_scale: f64,
    pub speed_bounds: [f64; 3],
}

impl CurriculumState {
    pub fn initial(cfg: &CurriculumConfig) -> Self {
        Self::at(0, cfg)
    }

    /// State after `samples` cumulative samples. Depends on nothing else.
    pub fn at(samples: u64, cfg: &CurriculumConfig) -> Self {
        let level = if cfg.enabled && cfg.interval > 0 { samples / cfg.interval } else { 0 };
        let exponent = i32::try_from(level).unwrap_or(i32::MAX);
        let speed_scale = (cfg.stabilization_initial_scale * cfg.stabilization_growth.powi(exponent))
            .min(cfg.stabilization_scale_cap.max(cfg.stabilization_initial_scale));
        let mut speed_bounds = [0.0; 3];
        for i in 0..3 {
            let cap = cfg.tracking_bound_caps[i].max(cfg.tracking_initial_bounds[i]);
            speed_bounds[i] = (cfg.tracking_initial_bounds[i] + level as f64 * cfg.tracking_bound_step).min(cap);
        }
        Self { samples_seen: samples, level, speed_scale, speed_bounds }
    }
}

/// Advances `curriculum` by `new_samples` samples of `task`. Racing has no
/// schedule and only counts samples.
pub fn curriculum_update(
    curriculum: &CurriculumState,
    new_samples: u64,
    task: TaskId,
    cfg: &CurriculumConfig,
) -> CurriculumState {
    let samples = curriculum.samples_seen + new_samples;
    match task {
        TaskId::Racing => CurriculumState { samples_seen: samples, ..curriculum.clone() },
        TaskId::Stabilization | TaskId::Tracking => CurriculumState::at(samples, cfg),
    }
}
