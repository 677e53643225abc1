//! Pursuit policies: the in-process interface, the heuristic baselines and
//! hyperparameter grid search.

mod grid;
mod heuristics;
mod observation;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DroneCommand, VelocityCommand};
use crate::episode::EpisodeResult;
use crate::world::{TaskParams, WorldState};

pub use grid::{expand_grid, grid_search, GridCell, GridSearchResult, ParameterGrid, PolicyFamily};
pub use heuristics::{
    angelani_action, apf_action, apf_force, janosov_action, janosov_aim_point, ApfParams, JanosovParams,
};
pub use observation::{build_observation, observation_len};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy returned {got} commands for {expected} drones")]
    Arity { expected: usize, got: usize },
    #[error("invalid command at {path}: {reason}")]
    InvalidCommand { path: String, reason: String },
    #[error("remote policy timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("remote policy disconnected")]
    Disconnected,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("transport error: {0}")]
    Transport(#[from] std::io::Error),
    #[error("{0}")]
    Unsupported(String),
    #[error("invalid policy configuration: {0}")]
    Config(String),
}

/// A shared controller producing one command per drone each step.
///
/// The episode loop calls `reset` once, then alternates `act` and
/// `observe_reward`, and finally `finish`.
pub trait Policy: Send {
    fn reset(&mut self, _task: &TaskParams, _seed: u64) -> Result<(), PolicyError> {
        Ok(())
    }

    fn act(&mut self, world: &WorldState) -> Result<Vec<DroneCommand>, PolicyError>;

    fn observe_reward(&mut self, _rewards: &[f64], _captured: bool, _done: bool) -> Result<(), PolicyError> {
        Ok(())
    }

    fn finish(&mut self, _result: &EpisodeResult) -> Result<(), PolicyError> {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyConfig {
    Angelani,
    Janosov(JanosovParams),
    Apf(ApfParams),
    /// Zero velocity for every drone.
    Idle,
    /// Commands come from a bridge client.
    External {
        endpoint: String,
    },
}

impl PolicyConfig {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyConfig::Angelani => "angelani",
            PolicyConfig::Janosov(_) => "janosov",
            PolicyConfig::Apf(_) => "apf",
            PolicyConfig::Idle => "idle",
            PolicyConfig::External { .. } => "external",
        }
    }

    /// Default configuration for a named policy.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "angelani" | "pursuit" => PolicyConfig::Angelani,
            "janosov" => PolicyConfig::Janosov(JanosovParams::default()),
            "apf" => PolicyConfig::Apf(ApfParams::default()),
            "idle" | "zero" => PolicyConfig::Idle,
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::Config(m.to_string()));
        match self {
            PolicyConfig::Janosov(p) => {
                if p.prediction_horizon < 0.0 || p.peer_repulsion_gain < 0.0 || p.wall_repulsion_gain < 0.0 {
                    return bad("janosov gains and horizon must be non-negative");
                }
                if !(0.0..=1.0).contains(&p.inertia) {
                    return bad("janosov inertia must lie in [0, 1]");
                }
            }
            PolicyConfig::Apf(p) => {
                if p.attract_gain < 0.0 || p.obstacle_repulsion_gain < 0.0 || p.peer_repulsion_gain < 0.0 {
                    return bad("apf gains must be non-negative");
                }
                if p.obstacle_influence_radius <= 0.0 || p.peer_influence_radius <= 0.0 {
                    return bad("apf influence radii must be positive");
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl fmt::Display for PolicyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Build an in-process policy. External policies only exist on the bridge.
pub fn build_policy(config: &PolicyConfig, max_speed: f64) -> Result<Box<dyn Policy>, PolicyError> {
    config.validate()?;
    Ok(match config {
        PolicyConfig::Angelani => Box::new(Heuristic {
            max_speed,
            kind: HeuristicKind::Angelani,
        }),
        PolicyConfig::Apf(p) => Box::new(Heuristic {
            max_speed,
            kind: HeuristicKind::Apf(*p),
        }),
        PolicyConfig::Janosov(p) => Box::new(JanosovPolicy {
            params: *p,
            max_speed,
            pending: VecDeque::new(),
        }),
        PolicyConfig::Idle => Box::new(IdlePolicy),
        PolicyConfig::External { endpoint } => {
            return Err(PolicyError::Unsupported(format!(
                "external policy `{endpoint}` must be driven through the bridge server"
            )))
        }
    })
}

pub struct IdlePolicy;

impl Policy for IdlePolicy {
    fn act(&mut self, world: &WorldState) -> Result<Vec<DroneCommand>, PolicyError> {
        Ok(vec![VelocityCommand::zero().into(); world.drones.len()])
    }
}

enum HeuristicKind {
    Angelani,
    Apf(ApfParams),
}

struct Heuristic {
    max_speed: f64,
    kind: HeuristicKind,
}

impl Policy for Heuristic {
    fn act(&mut self, world: &WorldState) -> Result<Vec<DroneCommand>, PolicyError> {
        Ok((0..world.drones.len())
            .map(|i| {
                match &self.kind {
                    HeuristicKind::Angelani => angelani_action(world, i, self.max_speed),
                    HeuristicKind::Apf(p) => apf_action(world, i, p, self.max_speed),
                }
                .into()
            })
            .collect())
    }
}

struct JanosovPolicy {
    params: JanosovParams,
    max_speed: f64,
    pending: VecDeque<Vec<DroneCommand>>,
}

impl Policy for JanosovPolicy {
    fn reset(&mut self, _task: &TaskParams, _seed: u64) -> Result<(), PolicyError> {
        self.pending.clear();
        Ok(())
    }

    fn act(&mut self, world: &WorldState) -> Result<Vec<DroneCommand>, PolicyError> {
        let fresh: Vec<DroneCommand> = (0..world.drones.len())
            .map(|i| janosov_action(world, i, &self.params, self.max_speed).into())
            .collect();
        let delay = self.params.command_delay_steps;
        if delay == 0 {
            return Ok(fresh);
        }
        self.pending.push_back(fresh);
        if self.pending.len() > delay {
            Ok(self.pending.pop_front().expect("queue is non-empty"))
        } else {
            Ok(vec![VelocityCommand::zero().into(); world.drones.len()])
        }
    }
}
