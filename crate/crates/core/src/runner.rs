//! Batch evaluation, sweeps and table output used by the `pursuit` binary.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::episode::{
    aggregate_metrics, batch_task, episode_seed, run_batch, run_episode, write_trajectory, EngineConfig, EpisodeError,
    EpisodeResult, Metrics, SpawnMode,
};
use crate::policies::{build_policy, PolicyConfig};
use crate::world::{IntrinsicParams, TaskParams};

pub const METRICS_HEADER: &str =
    "scenario,policy,capture_rate,capture_timestep_mean,capture_rate_std,capture_timestep_std,seeds,episodes";

/// One line of a metrics table: means over seeds with their spread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub policy: String,
    pub capture_rate: f64,
    pub capture_timestep_mean: f64,
    /// Sample standard deviation across seeds; zero for a single seed.
    pub capture_rate_std: f64,
    pub capture_timestep_std: f64,
    pub seeds: usize,
    /// Episodes per seed.
    pub episodes: usize,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.scenario,
            self.policy,
            self.capture_rate,
            self.capture_timestep_mean,
            self.capture_rate_std,
            self.capture_timestep_std,
            self.seeds,
            self.episodes
        )
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Collapse per-seed metrics into one row.
pub fn summarize(scenario: &str, policy: &str, per_seed: &[Metrics]) -> Result<MetricsRow, EpisodeError> {
    if per_seed.is_empty() {
        return Err(EpisodeError::EmptyBatch);
    }
    let rates: Vec<f64> = per_seed.iter().map(|m| m.capture_rate).collect();
    let steps: Vec<f64> = per_seed.iter().map(|m| m.mean_capture_timestep).collect();
    let (capture_rate, capture_rate_std) = mean_std(&rates);
    let (capture_timestep_mean, capture_timestep_std) = mean_std(&steps);
    Ok(MetricsRow {
        scenario: scenario.to_string(),
        policy: policy.to_string(),
        capture_rate,
        capture_timestep_mean,
        capture_rate_std,
        capture_timestep_std,
        seeds: per_seed.len(),
        episodes: per_seed[0].episode_count,
    })
}

/// A policy evaluated on one scenario over several seeds.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub scenario: String,
    pub task: TaskParams,
    pub policy: PolicyConfig,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub spawns: SpawnMode,
    pub engine: EngineConfig,
    pub workers: Option<usize>,
}

impl Evaluation {
    pub fn per_seed_results(&self) -> Result<Vec<Vec<EpisodeResult>>, EpisodeError> {
        self.seeds
            .iter()
            .map(|&seed| {
                let outcomes = run_batch(
                    &self.task,
                    self.spawns,
                    &self.policy,
                    self.episodes,
                    seed,
                    &self.engine,
                    self.workers,
                )?;
                Ok(outcomes.into_iter().map(|o| o.result).collect())
            })
            .collect()
    }

    pub fn run(&self) -> Result<MetricsRow, EpisodeError> {
        let per_seed = self
            .per_seed_results()?
            .iter()
            .map(|r| aggregate_metrics(r))
            .collect::<Result<Vec<_>, _>>()?;
        summarize(&self.scenario, self.policy.name(), &per_seed)
    }

    /// Replay the first `count` episodes of the first seed with logging on
    /// and write each to `dir/episode_<index>.jsonl`.
    pub fn write_trajectories(&self, dir: &Path, count: usize) -> Result<(), RunnerError> {
        let Some(&seed) = self.seeds.first() else {
            return Ok(());
        };
        fs::create_dir_all(dir)?;
        let mut engine = self.engine;
        engine.episode.log_trajectory = true;
        for i in 0..count.min(self.episodes) as u64 {
            let ep_seed = episode_seed(seed, i);
            let task = batch_task(&self.task, self.spawns, ep_seed)?;
            let mut policy = build_policy(&self.policy, engine.quad.max_speed).map_err(EpisodeError::PolicyConfig)?;
            let outcome = run_episode(&task, policy.as_mut(), ep_seed, &engine)?;
            let mut file = io::BufWriter::new(fs::File::create(dir.join(format!("episode_{i}.jsonl")))?);
            write_trajectory(&mut file, outcome.trajectory.as_deref().unwrap_or_default())?;
            file.flush()?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    CaptureRadius,
    EvaderSpeed,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::CaptureRadius => "capture_radius",
            SweepAxis::EvaderSpeed => "evader_speed",
        }
    }

    pub fn apply(self, base: IntrinsicParams, value: f64) -> IntrinsicParams {
        match self {
            SweepAxis::CaptureRadius => IntrinsicParams::new(value, base.evader_speed),
            SweepAxis::EvaderSpeed => IntrinsicParams::new(base.capture_radius, value),
        }
    }
}

pub fn sweep_header() -> String {
    format!("axis,value,{METRICS_HEADER}")
}

/// One row per axis value, every other setting taken from `base`.
pub fn sweep(base: &Evaluation, axis: SweepAxis, values: &[f64]) -> Result<Vec<(f64, MetricsRow)>, EpisodeError> {
    values
        .iter()
        .map(|&v| {
            let mut eval = base.clone();
            eval.task = base.task.with_intrinsic(axis.apply(base.task.intrinsic, v));
            eval.task.validate_for_simulation()?;
            Ok((v, eval.run()?))
        })
        .collect()
}

pub fn metrics_table(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{METRICS_HEADER}");
    for row in rows {
        let _ = writeln!(out, "{}", row.csv_line());
    }
    out
}

pub fn sweep_table(axis: SweepAxis, rows: &[(f64, MetricsRow)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", sweep_header());
    for (value, row) in rows {
        let _ = writeln!(out, "{},{},{}", axis.name(), value, row.csv_line());
    }
    out
}
