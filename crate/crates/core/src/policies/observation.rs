use crate::world::WorldState;

/// Length of one drone's observation vector.
///
/// Layout: self position (3), self velocity (3), orientation quaternion
/// w,x,y,z (4), evader relative position (3), evader relative velocity (3),
/// other drones' relative positions in index order (3 each), normalized time
/// (1), then `max_obstacles` slots of [relative base center (3), height,
/// radius, valid flag].
pub fn observation_len(drones: usize, max_obstacles: usize) -> usize {
    10 + 6 + 3 * drones.saturating_sub(1) + 1 + 6 * max_obstacles
}

/// Observation of drone `drone_index`. Obstacles beyond `max_obstacles`
/// are dropped; unused slots are all zero.
pub fn build_observation(world: &WorldState, drone_index: usize, max_obstacles: usize, horizon: usize) -> Vec<f64> {
    let n = world.drones.len();
    let me = &world.drones[drone_index];
    let mut obs = Vec::with_capacity(observation_len(n, max_obstacles));

    obs.extend(me.position.iter());
    obs.extend(me.velocity.iter());
    let q = me.orientation.quaternion();
    obs.extend([q.w, q.i, q.j, q.k]);

    obs.extend((world.evader.position - me.position).iter());
    obs.extend((world.evader.velocity - me.velocity).iter());

    for (j, other) in world.drones.iter().enumerate() {
        if j != drone_index {
            obs.extend((other.position - me.position).iter());
        }
    }

    obs.push(if horizon > 0 {
        world.step_index as f64 / horizon as f64
    } else {
        0.0
    });

    let obstacles = &world.task.external.obstacles;
    for slot in 0..max_obstacles {
        match obstacles.get(slot) {
            Some(o) => obs.extend([
                o.x - me.position.x,
                o.y - me.position.y,
                -me.position.z,
                o.height,
                o.radius,
                1.0,
            ]),
            None => obs.extend([0.0; 6]),
        }
    }
    obs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{ArenaSpec, ExternalParams, IntrinsicParams, Obstacle, TaskParams, Vec3};

    fn world() -> WorldState {
        let task = TaskParams {
            intrinsic: IntrinsicParams::target(),
            arena: ArenaSpec::default(),
            external: ExternalParams {
                drone_spawns: vec![
                    Vec3::new(0.1, 0.0, 0.5),
                    Vec3::new(-0.5, 0.0, 0.5),
                    Vec3::new(0.0, -0.5, 0.5),
                    Vec3::new(0.0, 0.5, 0.5),
                ],
                evader_spawn: Vec3::new(0.4, 0.0, 0.5),
                obstacles: vec![Obstacle {
                    x: -0.3,
                    y: 0.3,
                    radius: 0.3,
                    height: 0.6,
                }],
            },
        };
        WorldState::initial(&task)
    }

    #[test]
    fn length_matches_layout() {
        assert_eq!(observation_len(4, 3), 44);
        let w = world();
        for i in 0..4 {
            assert_eq!(build_observation(&w, i, 3, 800).len(), 44);
        }
    }

    #[test]
    fn evader_slot_is_relative() {
        let obs = build_observation(&world(), 0, 3, 800);
        assert!((obs[10] - 0.3).abs() < 1e-15);
        assert_eq!(obs[11], 0.0);
        assert_eq!(obs[12], 0.0);
        // identity orientation
        assert_eq!(&obs[6..10], &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn absent_obstacle_slots_are_zero() {
        let obs = build_observation(&world(), 0, 3, 800);
        let slots = &obs[26..];
        assert_eq!(slots.len(), 18);
        assert_eq!(slots[5], 1.0);
        assert!(slots[6..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn time_is_normalized() {
        let mut w = world();
        w.step_index = 200;
        let obs = build_observation(&w, 1, 3, 800);
        assert_eq!(obs[25], 0.25);
    }
}
