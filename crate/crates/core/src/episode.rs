//! Episode loop, team reward, capture detection and batch evaluation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{step_drone, QuadrotorParams};
use crate::evader::{step_evader, EvaderMode};
use crate::feasibility::{respawn, FeasibilityError};
use crate::policies::{build_policy, Policy, PolicyConfig, PolicyError};
use crate::world::{seeded_rng, TaskParams, Vec3, WorldError, WorldState};

/// Team bonus paid to every drone on a capture step.
pub const CAPTURE_BONUS: f64 = 10.0;
/// Paid by each drone closer than the collision radius to an obstacle.
pub const COLLISION_PENALTY: f64 = -1.0;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("invalid task: {0}")]
    Task(#[from] WorldError),
    #[error("policy failure at step {step}: {source}")]
    Policy {
        step: usize,
        #[source]
        source: PolicyError,
    },
    #[error(transparent)]
    PolicyConfig(PolicyError),
    #[error("cannot aggregate an empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Spawn(#[from] FeasibilityError),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeOptions {
    /// Steps per episode (T).
    pub horizon: usize,
    pub collision_radius: f64,
    pub capture_ends_episode: bool,
    pub log_trajectory: bool,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self {
            horizon: 800,
            collision_radius: crate::world::DEFAULT_COLLISION_RADIUS,
            capture_ends_episode: true,
            log_trajectory: false,
        }
    }
}

/// Everything besides the task and policy that determines an episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub quad: QuadrotorParams,
    pub episode: EpisodeOptions,
    pub evader_mode: EvaderMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub captured: bool,
    /// Step of the first capture, or the horizon on failure.
    pub capture_timestep: usize,
    pub per_drone_return: Vec<f64>,
    /// Sum of the team capture bonus over the episode.
    pub capture_return: f64,
    pub task: TaskParams,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub position: Vec3,
    pub velocity: Vec3,
}

/// One line of a trajectory log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub drones: Vec<AgentRecord>,
    pub evader: AgentRecord,
    pub rewards: Vec<f64>,
    pub captured: bool,
}

impl TrajectoryRecord {
    fn capture(step: usize, world: &WorldState, rewards: &[f64], captured: bool) -> Self {
        Self {
            step,
            drones: world
                .drones
                .iter()
                .map(|d| AgentRecord {
                    position: d.position,
                    velocity: d.velocity,
                })
                .collect(),
            evader: AgentRecord {
                position: world.evader.position,
                velocity: world.evader.velocity,
            },
            rewards: rewards.to_vec(),
            captured,
        }
    }
}

pub fn write_trajectory<W: Write>(out: &mut W, records: &[TrajectoryRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub result: EpisodeResult,
    pub trajectory: Option<Vec<TrajectoryRecord>>,
}

/// Any drone strictly closer than `capture_radius` to the evader.
pub fn check_capture(world: &WorldState, capture_radius: f64) -> bool {
    world
        .drones
        .iter()
        .any(|d| (d.position - world.evader.position).norm() < capture_radius)
}

/// Per-drone reward: capture bonus for all when captured, minus a penalty
/// for each drone within `collision_radius` of an obstacle.
pub fn compute_reward(world: &WorldState, capture_radius: f64, collision_radius: f64) -> Vec<f64> {
    let bonus = if check_capture(world, capture_radius) {
        CAPTURE_BONUS
    } else {
        0.0
    };
    world
        .drones
        .iter()
        .map(|d| {
            let colliding = world
                .task
                .external
                .obstacles
                .iter()
                .any(|o| o.distance_to(&d.position) < collision_radius);
            bonus + if colliding { COLLISION_PENALTY } else { 0.0 }
        })
        .collect()
}

/// Run one episode.
///
/// Capture is checked on the spawn state (reported as step 0) and after
/// every transition `t` in `0..T` (reported as step `t`).
pub fn run_episode(
    task: &TaskParams,
    policy: &mut dyn Policy,
    seed: u64,
    engine: &EngineConfig,
) -> Result<EpisodeOutcome, EpisodeError> {
    task.validate_for_simulation()?;
    let opts = &engine.episode;
    let horizon = opts.horizon;
    let dc = task.intrinsic.capture_radius;
    let n = task.drone_count();
    let policy_err = |step: usize| move |source| EpisodeError::Policy { step, source };

    policy.reset(task, seed).map_err(policy_err(0))?;

    let mut world = WorldState::initial(task);
    let mut returns = vec![0.0; n];
    let mut capture_return = 0.0;
    let mut captured_at: Option<usize> = None;
    let mut log = opts.log_trajectory.then(Vec::new);

    let mut accumulate = |rewards: &[f64], captured: bool, returns: &mut Vec<f64>| {
        for (acc, r) in returns.iter_mut().zip(rewards) {
            *acc += r;
        }
        if captured {
            capture_return += CAPTURE_BONUS;
        }
    };

    let mut done = false;
    if check_capture(&world, dc) {
        let rewards = compute_reward(&world, dc, opts.collision_radius);
        accumulate(&rewards, true, &mut returns);
        captured_at = Some(0);
        if let Some(log) = log.as_mut() {
            log.push(TrajectoryRecord::capture(0, &world, &rewards, true));
        }
        done = opts.capture_ends_episode;
    }

    let mut t = 0;
    while !done && t < horizon {
        let commands = policy.act(&world).map_err(policy_err(t))?;
        if commands.len() != n {
            return Err(EpisodeError::Policy {
                step: t,
                source: PolicyError::Arity {
                    expected: n,
                    got: commands.len(),
                },
            });
        }
        for (drone, cmd) in world.drones.iter_mut().zip(&commands) {
            *drone = step_drone(drone, cmd, &engine.quad, &task.arena);
        }
        world.evader = step_evader(&world, engine.evader_mode, engine.quad.dt);
        world.step_index = t + 1;

        let captured = check_capture(&world, dc);
        let rewards = compute_reward(&world, dc, opts.collision_radius);
        accumulate(&rewards, captured, &mut returns);
        if captured && captured_at.is_none() {
            captured_at = Some(t);
        }
        done = (captured && opts.capture_ends_episode) || t + 1 == horizon;
        if let Some(log) = log.as_mut() {
            log.push(TrajectoryRecord::capture(t, &world, &rewards, captured));
        }
        policy.observe_reward(&rewards, captured, done).map_err(policy_err(t))?;
        t += 1;
    }

    let result = EpisodeResult {
        captured: captured_at.is_some(),
        capture_timestep: captured_at.unwrap_or(horizon),
        per_drone_return: returns,
        capture_return,
        task: task.clone(),
        seed,
    };
    policy.finish(&result).map_err(policy_err(t))?;
    Ok(EpisodeOutcome {
        result,
        trajectory: log,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub capture_rate: f64,
    pub mean_capture_timestep: f64,
    pub episode_count: usize,
}

pub fn aggregate_metrics(results: &[EpisodeResult]) -> Result<Metrics, EpisodeError> {
    if results.is_empty() {
        return Err(EpisodeError::EmptyBatch);
    }
    let n = results.len() as f64;
    let captures = results.iter().filter(|r| r.captured).count() as f64;
    let steps: f64 = results.iter().map(|r| r.capture_timestep as f64).sum();
    Ok(Metrics {
        capture_rate: captures / n,
        mean_capture_timestep: steps / n,
        episode_count: results.len(),
    })
}

/// How spawn points are chosen for the episodes of a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpawnMode {
    /// Use the scenario's own spawn points every episode.
    Fixed,
    /// Keep the scenario's obstacles, draw feasible spawns from the episode seed.
    Randomized,
}

/// Seed of episode `index` of a run started with `run_seed`.
pub fn episode_seed(run_seed: u64, index: u64) -> u64 {
    (run_seed << 32).wrapping_add(index)
}

/// Task played by one episode of a batch.
pub fn batch_task(template: &TaskParams, spawns: SpawnMode, seed: u64) -> Result<TaskParams, EpisodeError> {
    Ok(match spawns {
        SpawnMode::Fixed => template.clone(),
        SpawnMode::Randomized => respawn(template, &mut seeded_rng(seed), 10_000)?,
    })
}

fn with_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, EpisodeError> {
    match workers {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| EpisodeError::Pool(e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

/// Run `(task, seed)` pairs concurrently. Output order matches input order
/// and does not depend on the worker count.
pub fn run_tasks(
    tasks: &[(TaskParams, u64)],
    policy: &PolicyConfig,
    engine: &EngineConfig,
    workers: Option<usize>,
) -> Result<Vec<EpisodeOutcome>, EpisodeError> {
    build_policy(policy, engine.quad.max_speed).map_err(EpisodeError::PolicyConfig)?;
    with_pool(workers, || {
        tasks
            .par_iter()
            .map(|(task, seed)| {
                let mut p = build_policy(policy, engine.quad.max_speed).map_err(EpisodeError::PolicyConfig)?;
                run_episode(task, p.as_mut(), *seed, engine)
            })
            .collect::<Result<Vec<_>, _>>()
    })?
}

/// Evaluate `episodes` episodes of a scenario.
pub fn run_batch(
    template: &TaskParams,
    spawns: SpawnMode,
    policy: &PolicyConfig,
    episodes: usize,
    run_seed: u64,
    engine: &EngineConfig,
    workers: Option<usize>,
) -> Result<Vec<EpisodeOutcome>, EpisodeError> {
    let tasks = with_pool(workers, || {
        (0..episodes as u64)
            .into_par_iter()
            .map(|i| {
                let seed = episode_seed(run_seed, i);
                batch_task(template, spawns, seed).map(|t| (t, seed))
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    run_tasks(&tasks, policy, engine, workers)
}
