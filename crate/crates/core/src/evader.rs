//! Scripted evader driven by an inverse-distance potential field.
//!
//! Each pursuer and each obstacle pushes the evader away along the line
//! joining them with magnitude 1/d, and the floor, ceiling and lateral wall
//! push it back toward the interior with magnitude 1/d. The evader moves
//! along the summed field at a constant speed.

use serde::{Deserialize, Serialize};

use crate::dynamics::clamp_to_arena_inset;
use crate::world::{EvaderState, Vec3, WorldState};

/// Distances below this saturate their term at magnitude `1 / FORCE_EPS`.
pub const FORCE_EPS: f64 = 1e-6;
/// Net forces with smaller norm have no usable direction.
pub const DIRECTION_EPS: f64 = 1e-9;
/// The evader is kept this far inside every arena face.
pub const EVADER_INSET: f64 = 1e-6;

/// How the summed field becomes a velocity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaderMode {
    /// Direction of the field, magnitude exactly the evader speed.
    #[default]
    ConstantSpeed,
    /// Field sum scaled by the evader speed, without normalization.
    RawSum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaderForceBreakdown {
    pub drone_terms: Vec<Vec3>,
    pub obstacle_terms: Vec<Vec3>,
    /// Ground, ceiling, lateral wall.
    pub boundary_terms: [Vec3; 3],
    pub total: Vec3,
}

/// `offset / |offset|^2`, saturated below `FORCE_EPS`.
fn inverse_distance(offset: Vec3) -> Vec3 {
    let d = offset.norm();
    if d >= FORCE_EPS {
        offset / (d * d)
    } else if d > 0.0 {
        offset / (d * FORCE_EPS)
    } else {
        Vec3::zeros()
    }
}

fn boundary(direction: Vec3, distance: f64) -> Vec3 {
    direction / distance.max(FORCE_EPS)
}

pub fn evader_force(world: &WorldState) -> EvaderForceBreakdown {
    let arena = &world.task.arena;
    let xe = world.evader.position;

    let drone_terms: Vec<Vec3> = world.drones.iter().map(|d| inverse_distance(xe - d.position)).collect();

    let obstacle_terms: Vec<Vec3> = world
        .task
        .external
        .obstacles
        .iter()
        .map(|o| {
            let offset = xe - o.closest_point(&xe);
            if offset.norm() < FORCE_EPS && o.contains(&xe) {
                o.exit_direction(&xe) / FORCE_EPS
            } else {
                inverse_distance(offset)
            }
        })
        .collect();

    let ground = boundary(Vec3::z(), xe.z);
    let ceiling = boundary(-Vec3::z(), arena.height - xe.z);
    let r = xe.xy().norm();
    let wall = if r > 0.0 {
        boundary(Vec3::new(-xe.x / r, -xe.y / r, 0.0), arena.radius - r)
    } else {
        Vec3::zeros()
    };
    let boundary_terms = [ground, ceiling, wall];

    let total = drone_terms.iter().chain(&obstacle_terms).chain(&boundary_terms).sum();
    EvaderForceBreakdown {
        drone_terms,
        obstacle_terms,
        boundary_terms,
        total,
    }
}

/// Velocity for a given net force; also returns the heading to remember.
pub fn velocity_from_force(
    total: &Vec3,
    speed: f64,
    last_heading: Option<Vec3>,
    mode: EvaderMode,
) -> (Vec3, Option<Vec3>) {
    let n = total.norm();
    let heading = if n > DIRECTION_EPS {
        Some(total / n)
    } else {
        last_heading
    };
    let velocity = match mode {
        EvaderMode::ConstantSpeed => heading.map_or_else(Vec3::zeros, |h| h * speed),
        EvaderMode::RawSum => total * speed,
    };
    (velocity, heading)
}

pub fn evader_velocity(world: &WorldState, mode: EvaderMode) -> Vec3 {
    let force = evader_force(world);
    velocity_from_force(
        &force.total,
        world.task.intrinsic.evader_speed,
        world.evader.last_heading,
        mode,
    )
    .0
}

/// Advance the evader one step of length `dt`.
pub fn step_evader(world: &WorldState, mode: EvaderMode, dt: f64) -> EvaderState {
    let force = evader_force(world);
    let (velocity, last_heading) = velocity_from_force(
        &force.total,
        world.task.intrinsic.evader_speed,
        world.evader.last_heading,
        mode,
    );
    let position = clamp_to_arena_inset(world.evader.position + velocity * dt, &world.task.arena, EVADER_INSET);
    EvaderState {
        position,
        velocity,
        last_heading,
    }
}
