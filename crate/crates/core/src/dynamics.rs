//! Drone motion models and arena confinement.
//!
//! Two reduced models share one state type: a first-order velocity tracker
//! driven by heuristic planners, and a collective-thrust / body-rate model
//! for externally driven learners. The inner attitude and rate loops are
//! collapsed into first-order lags.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::world::{ArenaSpec, DroneState, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub gravity: f64,
    /// Body-rate tracking lag (s). Zero means instantaneous.
    pub rate_time_constant: f64,
    /// Velocity tracking lag (s). Zero means instantaneous.
    pub velocity_time_constant: f64,
    pub max_speed: f64,
    pub dt: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 0.03,
            gravity: 9.81,
            rate_time_constant: 0.05,
            velocity_time_constant: 0.05,
            max_speed: 1.0,
            dt: 0.02,
        }
    }
}

impl QuadrotorParams {
    pub fn max_thrust(&self) -> f64 {
        2.0 * self.mass * self.gravity
    }
}

/// Desired velocity (m/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand(pub Vec3);

impl VelocityCommand {
    pub fn zero() -> Self {
        Self(Vec3::zeros())
    }

    /// Scale down to at most `max_speed`.
    pub fn clamped(self, max_speed: f64) -> Self {
        Self(clamp_norm(self.0, max_speed))
    }
}

/// Collective thrust (N) and desired body rate (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThrustRateCommand {
    pub thrust: f64,
    pub body_rate: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DroneCommand {
    Velocity(VelocityCommand),
    ThrustRate(ThrustRateCommand),
}

impl From<VelocityCommand> for DroneCommand {
    fn from(c: VelocityCommand) -> Self {
        DroneCommand::Velocity(c)
    }
}

impl From<ThrustRateCommand> for DroneCommand {
    fn from(c: ThrustRateCommand) -> Self {
        DroneCommand::ThrustRate(c)
    }
}

pub(crate) fn clamp_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max && n > 0.0 {
        v * (max / n)
    } else {
        v
    }
}

fn lag_factor(time_constant: f64, dt: f64) -> f64 {
    if time_constant > 0.0 {
        (-dt / time_constant).exp()
    } else {
        0.0
    }
}

/// Project a point onto the closed arena cylinder.
pub fn clamp_to_arena(position: Vec3, arena: &ArenaSpec) -> Vec3 {
    clamp_to_arena_inset(position, arena, 0.0)
}

/// Project onto the arena shrunk by `inset` on every face.
pub fn clamp_to_arena_inset(position: Vec3, arena: &ArenaSpec, inset: f64) -> Vec3 {
    let max_r = arena.radius - inset;
    let r = position.xy().norm();
    let (x, y) = if r > max_r {
        // Rounding can leave the scaled point a hair outside; shrink until it isn't.
        let mut s = max_r / r;
        while (position.xy() * s).norm() > max_r {
            s = s.next_down();
        }
        (position.x * s, position.y * s)
    } else {
        (position.x, position.y)
    };
    Vec3::new(x, y, position.z.clamp(inset, arena.height - inset))
}

/// Clamp the position and drop any velocity component still pointing out
/// through the face the drone was projected onto.
fn confine(state: &mut DroneState, arena: &ArenaSpec) {
    let p = state.position;
    let clamped = clamp_to_arena(p, arena);
    if clamped == p {
        return;
    }
    let v = &mut state.velocity;
    if (p.z < 0.0 && v.z < 0.0) || (p.z > arena.height && v.z > 0.0) {
        v.z = 0.0;
    }
    let r = p.xy().norm();
    if r > arena.radius {
        let n = Vec3::new(p.x / r, p.y / r, 0.0);
        let out = v.dot(&n);
        if out > 0.0 {
            *v -= n * out;
        }
    }
    state.position = clamped;
}

fn yaw_aligned(velocity: &Vec3) -> UnitQuaternion<f64> {
    let horizontal = velocity.xy().norm();
    if horizontal > 1e-12 {
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), velocity.y.atan2(velocity.x))
    } else {
        UnitQuaternion::identity()
    }
}

/// First-order velocity tracking; the heuristics' execution model.
pub fn step_velocity_model(
    state: &DroneState,
    cmd: VelocityCommand,
    params: &QuadrotorParams,
    arena: &ArenaSpec,
) -> DroneState {
    let target = cmd.clamped(params.max_speed).0;
    let alpha = lag_factor(params.velocity_time_constant, params.dt);
    let velocity = clamp_norm(target + (state.velocity - target) * alpha, params.max_speed);
    let mut next = DroneState {
        position: state.position + velocity * params.dt,
        velocity,
        orientation: yaw_aligned(&velocity),
        body_rate: Vec3::zeros(),
    };
    confine(&mut next, arena);
    next
}

/// Collective thrust plus body-rate tracking on a rigid body.
pub fn step_quadrotor_model(
    state: &DroneState,
    cmd: ThrustRateCommand,
    params: &QuadrotorParams,
    arena: &ArenaSpec,
) -> DroneState {
    let dt = params.dt;
    let alpha = lag_factor(params.rate_time_constant, dt);
    let body_rate = cmd.body_rate + (state.body_rate - cmd.body_rate) * alpha;

    let mut orientation = state.orientation * UnitQuaternion::from_scaled_axis(body_rate * dt);
    orientation.renormalize();

    let thrust = if cmd.thrust.is_nan() {
        0.0
    } else {
        cmd.thrust.clamp(0.0, params.max_thrust())
    };
    let body_z = orientation * Vec3::z();
    let accel = body_z * (thrust / params.mass) - Vec3::z() * params.gravity;
    let velocity = clamp_norm(state.velocity + accel * dt, params.max_speed);

    let mut next = DroneState {
        position: state.position + velocity * dt,
        velocity,
        orientation,
        body_rate,
    };
    confine(&mut next, arena);
    next
}

/// Dispatch on the command kind.
pub fn step_drone(state: &DroneState, cmd: &DroneCommand, params: &QuadrotorParams, arena: &ArenaSpec) -> DroneState {
    match cmd {
        DroneCommand::Velocity(v) => step_velocity_model(state, *v, params, arena),
        DroneCommand::ThrustRate(t) => step_quadrotor_model(state, *t, params, arena),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arena() -> ArenaSpec {
        ArenaSpec::default()
    }

    fn instant() -> QuadrotorParams {
        QuadrotorParams {
            velocity_time_constant: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn euler_step_with_instant_tracking() {
        let s = DroneState::at_rest(Vec3::new(0.1, 0.0, 0.5));
        let n = step_velocity_model(&s, VelocityCommand(Vec3::new(1.0, 0.0, 0.0)), &instant(), &arena());
        assert_eq!(n.velocity, Vec3::new(1.0, 0.0, 0.0));
        assert!((n.position.x - 0.12).abs() < 1e-15);
    }

    #[test]
    fn command_is_clamped_to_max_speed() {
        let s = DroneState::at_rest(Vec3::new(0.0, 0.0, 0.5));
        let n = step_velocity_model(&s, VelocityCommand(Vec3::new(3.0, 0.0, 0.0)), &instant(), &arena());
        assert_eq!(n.velocity, Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn velocity_lag_matches_closed_form() {
        let p = QuadrotorParams {
            velocity_time_constant: 0.1,
            ..Default::default()
        };
        let s = DroneState::at_rest(Vec3::new(0.0, 0.0, 0.5));
        let n = step_velocity_model(&s, VelocityCommand(Vec3::new(1.0, 0.0, 0.0)), &p, &arena());
        let oracle = 1.0 - (-0.2f64).exp();
        assert!((n.velocity.x - oracle).abs() < 1e-12);
        assert!((n.velocity.x - 0.1813).abs() < 1e-4);
    }

    #[test]
    fn yaw_follows_velocity() {
        let s = DroneState::at_rest(Vec3::new(0.0, 0.0, 0.5));
        let n = step_velocity_model(&s, VelocityCommand(Vec3::new(0.0, 1.0, 0.0)), &instant(), &arena());
        let heading = n.orientation * Vec3::x();
        assert!((heading - Vec3::y()).norm() < 1e-12);
        let still = step_velocity_model(&s, VelocityCommand::zero(), &instant(), &arena());
        assert_eq!(still.orientation, UnitQuaternion::identity());
    }

    #[test]
    fn hover_is_force_balanced() {
        let p = QuadrotorParams::default();
        let s = DroneState::at_rest(Vec3::new(0.0, 0.0, 0.6));
        let cmd = ThrustRateCommand {
            thrust: p.mass * p.gravity,
            body_rate: Vec3::zeros(),
        };
        let n = step_quadrotor_model(&s, cmd, &p, &arena());
        assert!(n.velocity.norm() < 1e-12);
        assert!((n.position - s.position).norm() < 1e-12);
    }

    #[test]
    fn free_fall() {
        let p = QuadrotorParams::default();
        let s = DroneState::at_rest(Vec3::new(0.0, 0.0, 0.6));
        let cmd = ThrustRateCommand {
            thrust: 0.0,
            body_rate: Vec3::zeros(),
        };
        let n = step_quadrotor_model(&s, cmd, &p, &arena());
        assert!((n.velocity.z + 0.1962).abs() < 1e-12);
    }

    #[test]
    fn body_rate_lag_matches_closed_form() {
        let p = QuadrotorParams::default();
        let s = DroneState::at_rest(Vec3::new(0.0, 0.0, 0.6));
        let cmd = ThrustRateCommand {
            thrust: p.mass * p.gravity,
            body_rate: Vec3::new(0.0, 0.0, 1.0),
        };
        let n = step_quadrotor_model(&s, cmd, &p, &arena());
        let oracle = 1.0 - (-0.4f64).exp();
        assert!((n.body_rate.z - oracle).abs() < 1e-12);
        assert!((n.body_rate.z - 0.3297).abs() < 1e-4);
    }

    #[test]
    fn thrust_is_clamped() {
        let p = QuadrotorParams {
            max_speed: 100.0,
            ..Default::default()
        };
        let s = DroneState::at_rest(Vec3::new(0.0, 0.0, 0.6));
        let cmd = ThrustRateCommand {
            thrust: 50.0,
            body_rate: Vec3::zeros(),
        };
        let n = step_quadrotor_model(&s, cmd, &p, &arena());
        assert!((n.velocity.z - p.gravity * p.dt).abs() < 1e-12);
    }

    #[test]
    fn clamp_examples() {
        let a = arena();
        assert_eq!(clamp_to_arena(Vec3::new(0.5, 0.0, 0.6), &a), Vec3::new(0.5, 0.0, 0.6));
        assert_eq!(clamp_to_arena(Vec3::new(1.8, 0.0, 0.6), &a), Vec3::new(0.9, 0.0, 0.6));
        assert_eq!(clamp_to_arena(Vec3::new(0.0, 0.0, -0.3), &a), Vec3::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn wall_contact_removes_outward_velocity() {
        let s = DroneState::at_rest(Vec3::new(0.895, 0.0, 0.5));
        let n = step_velocity_model(&s, VelocityCommand(Vec3::new(1.0, 0.5, 0.0)), &instant(), &arena());
        assert!((n.position.xy().norm() - 0.9).abs() < 1e-12);
        let normal = Vec3::new(n.position.x, n.position.y, 0.0) / 0.9;
        assert!(n.velocity.dot(&normal) < 1e-9);
        assert!(n.velocity.y > 0.4);
    }

    #[test]
    fn quaternion_norm_survives_long_integration() {
        let p = QuadrotorParams::default();
        let mut s = DroneState::at_rest(Vec3::new(0.0, 0.0, 0.6));
        let cmd = ThrustRateCommand {
            thrust: p.mass * p.gravity,
            body_rate: Vec3::new(0.7, -1.3, 2.1),
        };
        for _ in 0..100_000 {
            s = step_quadrotor_model(&s, cmd, &p, &arena());
        }
        assert!((s.orientation.quaternion().norm() - 1.0).abs() < 1e-9);
        assert!(arena().contains(&s.position));
    }

    fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
        (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn speed_never_exceeds_limit(v0 in vec3(1.0), cmd in vec3(10.0), rate in vec3(20.0),
                                     thrust in -1.0f64..2.0, pos in vec3(1.0), tau in 0.0f64..0.3) {
            let p = QuadrotorParams { velocity_time_constant: tau, ..Default::default() };
            let a = arena();
            let mut s = DroneState::at_rest(clamp_to_arena(pos, &a));
            s.velocity = clamp_norm(v0, p.max_speed);
            let n1 = step_velocity_model(&s, VelocityCommand(cmd), &p, &a);
            prop_assert!(n1.velocity.norm() <= p.max_speed + 1e-9);
            prop_assert!(a.contains(&n1.position));
            let n2 = step_quadrotor_model(&s, ThrustRateCommand { thrust, body_rate: rate }, &p, &a);
            prop_assert!(n2.velocity.norm() <= p.max_speed + 1e-9);
            prop_assert!(a.contains(&n2.position));
            prop_assert!((n2.orientation.quaternion().norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn clamp_is_idempotent(p in vec3(3.0)) {
            let a = arena();
            let once = clamp_to_arena(p, &a);
            prop_assert_eq!(clamp_to_arena(once, &a), once);
        }

        #[test]
        fn instant_tracking_moves_speed_times_dt(cmd in vec3(0.5)) {
            let p = instant();
            let s = DroneState::at_rest(Vec3::new(0.0, 0.0, 0.6));
            let n = step_velocity_model(&s, VelocityCommand(cmd), &p, &arena());
            prop_assert!(((n.position - s.position).norm() - cmd.norm() * p.dt).abs() < 1e-12);
        }
    }
}
