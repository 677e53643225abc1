//! Heuristic pursuit baselines. Each maps the world to a desired velocity
//! for one drone; the velocity-tracking model executes it.
//!
//! Angelani: pure attraction to the evader.
//! Janosov: chase of the predicted evader position with peer and boundary
//! repulsion and velocity inertia (a reconstruction from its published
//! description; noise is omitted and delay is an optional hook).
//! APF: attraction plus short-range obstacle and peer repulsion.

use serde::{Deserialize, Serialize};

use crate::dynamics::{clamp_norm, VelocityCommand};
use crate::world::{Vec3, WorldState};

const EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JanosovParams {
    /// Upper bound on the evader look-ahead time (s).
    pub prediction_horizon: f64,
    /// Weight of the current velocity in the blended command, in [0, 1].
    pub inertia: f64,
    pub peer_repulsion_gain: f64,
    pub wall_repulsion_gain: f64,
    /// Commands are applied this many steps after they are computed.
    pub command_delay_steps: usize,
}

impl Default for JanosovParams {
    fn default() -> Self {
        Self {
            prediction_horizon: 0.3,
            inertia: 0.1,
            peer_repulsion_gain: 0.02,
            wall_repulsion_gain: 0.005,
            command_delay_steps: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApfParams {
    pub attract_gain: f64,
    pub obstacle_repulsion_gain: f64,
    /// Obstacles farther than this (m) exert no force.
    pub obstacle_influence_radius: f64,
    pub peer_repulsion_gain: f64,
    pub peer_influence_radius: f64,
}

impl Default for ApfParams {
    fn default() -> Self {
        Self {
            attract_gain: 1.0,
            obstacle_repulsion_gain: 0.02,
            obstacle_influence_radius: 0.2,
            peer_repulsion_gain: 0.01,
            peer_influence_radius: 0.3,
        }
    }
}

fn unit_or_zero(v: Vec3) -> Vec3 {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        Vec3::zeros()
    }
}

/// Repulsion of drone `i` from drone `j` with magnitude 1/d. Coincident
/// drones are split along a horizontal direction perpendicular to `chase`,
/// the lower index taking the positive side.
fn peer_push(offset: Vec3, i: usize, j: usize, chase: &Vec3) -> Vec3 {
    let d = offset.norm();
    if d >= EPS {
        return offset / (d * d);
    }
    let mut side = Vec3::new(-chase.y, chase.x, 0.0);
    if side.norm() < 1e-12 {
        side = Vec3::x();
    }
    let sign = if i < j { 1.0 } else { -1.0 };
    side.normalize() * (sign / EPS)
}

pub fn angelani_action(world: &WorldState, drone_index: usize, max_speed: f64) -> VelocityCommand {
    let xp = world.drones[drone_index].position;
    VelocityCommand(unit_or_zero(world.evader.position - xp) * max_speed)
}

/// Point the Janosov chase term aims at.
pub fn janosov_aim_point(world: &WorldState, drone_index: usize, params: &JanosovParams, max_speed: f64) -> Vec3 {
    let xp = world.drones[drone_index].position;
    let xe = world.evader.position;
    let lead = if max_speed > 0.0 {
        ((xe - xp).norm() / max_speed).min(params.prediction_horizon.max(0.0))
    } else {
        0.0
    };
    xe + world.evader.velocity * lead
}

pub fn janosov_action(
    world: &WorldState,
    drone_index: usize,
    params: &JanosovParams,
    max_speed: f64,
) -> VelocityCommand {
    let me = &world.drones[drone_index];
    let xp = me.position;
    let chase = unit_or_zero(janosov_aim_point(world, drone_index, params, max_speed) - xp);

    let peers: Vec3 = world
        .drones
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != drone_index)
        .map(|(j, other)| peer_push(xp - other.position, drone_index, j, &chase))
        .sum();

    let arena = &world.task.arena;
    let r = xp.xy().norm();
    let mut walls = Vec3::z() / xp.z.max(EPS) - Vec3::z() / (arena.height - xp.z).max(EPS);
    if r > 0.0 {
        walls += Vec3::new(-xp.x / r, -xp.y / r, 0.0) / (arena.radius - r).max(EPS);
    }

    let steer = chase + peers * params.peer_repulsion_gain + walls * params.wall_repulsion_gain;
    let desired = unit_or_zero(steer) * max_speed;
    let inertia = params.inertia.clamp(0.0, 1.0);
    let blended = desired * (1.0 - inertia) + me.velocity * inertia;
    VelocityCommand(clamp_norm(blended, max_speed))
}

/// Summed APF force before normalization.
pub fn apf_force(world: &WorldState, drone_index: usize, params: &ApfParams) -> Vec3 {
    let xp = world.drones[drone_index].position;
    let chase = unit_or_zero(world.evader.position - xp);
    let mut force = chase * params.attract_gain;

    for o in &world.task.external.obstacles {
        let offset = xp - o.closest_point(&xp);
        let d = offset.norm();
        if d >= params.obstacle_influence_radius {
            continue;
        }
        force += if o.contains(&xp) || d < EPS {
            o.exit_direction(&xp) * (params.obstacle_repulsion_gain / EPS)
        } else {
            offset * (params.obstacle_repulsion_gain / (d * d))
        };
    }

    for (j, other) in world.drones.iter().enumerate() {
        if j == drone_index {
            continue;
        }
        let offset = xp - other.position;
        if offset.norm() < params.peer_influence_radius {
            force += peer_push(offset, drone_index, j, &chase) * params.peer_repulsion_gain;
        }
    }
    force
}

pub fn apf_action(world: &WorldState, drone_index: usize, params: &ApfParams, max_speed: f64) -> VelocityCommand {
    VelocityCommand(unit_or_zero(apf_force(world, drone_index, params)) * max_speed)
}
