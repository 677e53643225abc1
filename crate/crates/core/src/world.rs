//! Domain types for a pursuit-evasion task, scenario documents and the
//! domain-randomized external-parameter sampler.

use std::fmt;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Deterministic random source used throughout the engine.
pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Edge length of a drone (m). Also the feasibility grid cell size.
pub const DRONE_SIZE: f64 = 0.1;
/// Default drone-obstacle collision distance (m).
pub const DEFAULT_COLLISION_RADIUS: f64 = 0.1;
/// Minimum pairwise spawn distance between any two agents (m).
pub const DEFAULT_SPAWN_SEPARATION: f64 = 2.0 * DRONE_SIZE;

const GEOM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("malformed scenario document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("rejection sampling gave up after {attempts} attempts ({what})")]
    SamplingExhausted { attempts: usize, what: &'static str },
    #[error("unknown scenario preset `{0}`")]
    UnknownPreset(String),
    #[error("failed to read scenario `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> WorldError {
    WorldError::Invalid {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Cylindrical arena centered on the origin, floor at z = 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArenaSpec {
    pub radius: f64,
    pub height: f64,
}

impl Default for ArenaSpec {
    fn default() -> Self {
        Self {
            radius: 0.9,
            height: 1.2,
        }
    }
}

impl ArenaSpec {
    pub fn contains(&self, p: &Vec3) -> bool {
        p.xy().norm() <= self.radius + GEOM_TOL && p.z >= -GEOM_TOL && p.z <= self.height + GEOM_TOL
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(invalid(
                "arena.radius",
                format!("must be positive, got {}", self.radius),
            ));
        }
        if !(self.height.is_finite() && self.height > 0.0) {
            return Err(invalid(
                "arena.height",
                format!("must be positive, got {}", self.height),
            ));
        }
        Ok(())
    }
}

/// A vertical cylinder standing on the floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub height: f64,
}

impl Obstacle {
    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    /// Closest point of the solid cylinder to `p`. Returns `p` itself when
    /// `p` lies inside the solid.
    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        let rel = p.xy() - self.center();
        let d = rel.norm();
        let xy = if d > self.radius {
            self.center() + rel * (self.radius / d)
        } else {
            p.xy()
        };
        Vec3::new(xy.x, xy.y, p.z.clamp(0.0, self.height))
    }

    /// Euclidean distance from `p` to the solid (zero inside).
    pub fn distance_to(&self, p: &Vec3) -> f64 {
        (p - self.closest_point(p)).norm()
    }

    /// Whether `p` lies strictly inside the solid.
    pub fn contains(&self, p: &Vec3) -> bool {
        (p.xy() - self.center()).norm() < self.radius && p.z < self.height && p.z > 0.0
    }

    /// Direction of the shortest exit from the solid for a point inside it
    /// (lateral wall or top cap).
    pub fn exit_direction(&self, p: &Vec3) -> Vec3 {
        let rel = p.xy() - self.center();
        let d = rel.norm();
        let lateral_depth = self.radius - d;
        let top_depth = self.height - p.z;
        if top_depth <= lateral_depth {
            Vec3::z()
        } else if d > 0.0 {
            Vec3::new(rel.x / d, rel.y / d, 0.0)
        } else {
            Vec3::x()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicParams {
    pub capture_radius: f64,
    pub evader_speed: f64,
}

impl IntrinsicParams {
    pub fn new(capture_radius: f64, evader_speed: f64) -> Self {
        Self {
            capture_radius,
            evader_speed,
        }
    }

    /// Target difficulty used for training and evaluation: d_c = 0.12, v_e = 2.4.
    pub fn target() -> Self {
        Self::new(0.12, 2.4)
    }

    pub fn validate(&self, arena: &ArenaSpec) -> Result<(), WorldError> {
        let dc = self.capture_radius;
        if !(dc.is_finite() && dc > 0.0 && dc <= arena.radius + GEOM_TOL) {
            return Err(invalid(
                "intrinsic.capture_radius",
                format!("must lie in (0, {}], got {dc}", arena.radius),
            ));
        }
        if !(self.evader_speed.is_finite() && self.evader_speed >= 0.0) {
            return Err(invalid(
                "intrinsic.evader_speed",
                format!("must be non-negative, got {}", self.evader_speed),
            ));
        }
        Ok(())
    }
}

/// Scenario layout: spawn points and obstacles.
#[derive(Clone, Debug, PartialEq)]
pub struct ExternalParams {
    pub drone_spawns: Vec<Vec3>,
    pub evader_spawn: Vec3,
    pub obstacles: Vec<Obstacle>,
}

impl ExternalParams {
    fn agents(&self) -> impl Iterator<Item = (String, &Vec3)> {
        self.drone_spawns
            .iter()
            .enumerate()
            .map(|(i, p)| (format!("drones[{i}]"), p))
            .chain(std::iter::once(("evader".to_string(), &self.evader_spawn)))
    }

    /// Containment invariants: obstacles inside the arena, spawns inside the
    /// arena and outside every obstacle.
    pub fn validate_geometry(&self, arena: &ArenaSpec) -> Result<(), WorldError> {
        if self.drone_spawns.is_empty() {
            return Err(invalid("drones", "at least one drone is required"));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            let path = |f: &str| format!("obstacles[{i}].{f}");
            if !(o.radius.is_finite() && o.radius > 0.0) {
                return Err(invalid(path("radius"), format!("must be positive, got {}", o.radius)));
            }
            if !(o.height.is_finite() && o.height > 0.0 && o.height <= arena.height + GEOM_TOL) {
                return Err(invalid(
                    path("height"),
                    format!("must lie in (0, {}], got {}", arena.height, o.height),
                ));
            }
            if !(o.x.is_finite() && o.y.is_finite()) || o.center().norm() + o.radius > arena.radius + GEOM_TOL {
                return Err(invalid(
                    format!("obstacles[{i}]"),
                    "footprint extends outside the arena",
                ));
            }
        }
        for (path, p) in self.agents() {
            if !p.iter().all(|c| c.is_finite()) || !arena.contains(p) {
                return Err(invalid(
                    path,
                    format!("spawn {:?} lies outside the arena", p.as_slice()),
                ));
            }
            if let Some(j) = self.obstacles.iter().position(|o| o.contains(p)) {
                return Err(invalid(path, format!("spawn lies inside obstacles[{j}]")));
            }
        }
        Ok(())
    }

    /// Every pair of agents at least `min_separation` apart.
    pub fn validate_separation(&self, min_separation: f64) -> Result<(), WorldError> {
        let agents: Vec<_> = self.agents().collect();
        for (a, (pa, xa)) in agents.iter().enumerate() {
            for (pb, xb) in agents.iter().skip(a + 1) {
                let d = (*xa - *xb).norm();
                if d + GEOM_TOL < min_separation {
                    return Err(invalid(
                        pa.clone(),
                        format!("only {d:.4} m from {pb} (minimum {min_separation})"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One pursuit-evasion task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ScenarioDoc", try_from = "ScenarioDoc")]
pub struct TaskParams {
    pub intrinsic: IntrinsicParams,
    pub external: ExternalParams,
    pub arena: ArenaSpec,
}

impl TaskParams {
    pub fn drone_count(&self) -> usize {
        self.external.drone_spawns.len()
    }

    pub fn with_intrinsic(&self, intrinsic: IntrinsicParams) -> Self {
        Self {
            intrinsic,
            ..self.clone()
        }
    }

    /// All invariants except spawn separation. This is what the simulator
    /// requires; hand-built fixtures may place agents closer than the
    /// sampler ever would.
    pub fn validate_for_simulation(&self) -> Result<(), WorldError> {
        self.arena.validate()?;
        self.intrinsic.validate(&self.arena)?;
        self.external.validate_geometry(&self.arena)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        self.validate_for_simulation()?;
        self.external.validate_separation(DEFAULT_SPAWN_SEPARATION)
    }
}

/// On-disk scenario layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    arena: ArenaSpec,
    intrinsic: IntrinsicParams,
    drones: Vec<[f64; 3]>,
    evader: [f64; 3],
    #[serde(default)]
    obstacles: Vec<Obstacle>,
}

impl From<TaskParams> for ScenarioDoc {
    fn from(t: TaskParams) -> Self {
        Self {
            arena: t.arena,
            intrinsic: t.intrinsic,
            drones: t.external.drone_spawns.iter().map(|p| [p.x, p.y, p.z]).collect(),
            evader: [
                t.external.evader_spawn.x,
                t.external.evader_spawn.y,
                t.external.evader_spawn.z,
            ],
            obstacles: t.external.obstacles,
        }
    }
}

impl ScenarioDoc {
    fn into_task(self) -> TaskParams {
        TaskParams {
            intrinsic: self.intrinsic,
            arena: self.arena,
            external: ExternalParams {
                drone_spawns: self.drones.iter().map(|p| Vec3::from(*p)).collect(),
                evader_spawn: Vec3::from(self.evader),
                obstacles: self.obstacles,
            },
        }
    }
}

impl TryFrom<ScenarioDoc> for TaskParams {
    type Error = WorldError;

    fn try_from(doc: ScenarioDoc) -> Result<Self, Self::Error> {
        let task = doc.into_task();
        task.validate_for_simulation()?;
        Ok(task)
    }
}

/// Parse and validate a scenario document.
pub fn load_scenario(contents: &str) -> Result<TaskParams, WorldError> {
    let doc: ScenarioDoc = serde_json::from_str(contents)?;
    let task = doc.into_task();
    task.validate()?;
    Ok(task)
}

pub fn save_scenario(task: &TaskParams) -> String {
    serde_json::to_string_pretty(&ScenarioDoc::from(task.clone())).expect("scenario documents always serialize")
}

pub const PRESET_NAMES: [&str; 6] = ["empty", "tower1", "curve2", "tower3", "curve4", "tower5"];

pub fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "empty" => include_str!("../scenarios/empty.json"),
        "tower1" => include_str!("../scenarios/tower1.json"),
        "curve2" => include_str!("../scenarios/curve2.json"),
        "tower3" => include_str!("../scenarios/tower3.json"),
        "curve4" => include_str!("../scenarios/curve4.json"),
        "tower5" => include_str!("../scenarios/tower5.json"),
        _ => return None,
    })
}

pub fn load_preset(name: &str) -> Result<TaskParams, WorldError> {
    let src = preset_source(name).ok_or_else(|| WorldError::UnknownPreset(name.to_string()))?;
    load_scenario(src)
}

/// Resolve a preset name or a path to a scenario document.
pub fn resolve_scenario(name_or_path: &str) -> Result<TaskParams, WorldError> {
    if let Some(src) = preset_source(name_or_path) {
        return load_scenario(src);
    }
    let path = std::path::Path::new(name_or_path);
    if !path.exists() {
        return Err(WorldError::UnknownPreset(name_or_path.to_string()));
    }
    let contents = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
        path: name_or_path.to_string(),
        source,
    })?;
    load_scenario(&contents)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DroneState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub orientation: UnitQuaternion<f64>,
    pub body_rate: Vec3,
}

impl DroneState {
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            orientation: UnitQuaternion::identity(),
            body_rate: Vec3::zeros(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaderState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Unit direction of the last nonzero flee force; `None` until one exists.
    pub last_heading: Option<Vec3>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub drones: Vec<DroneState>,
    pub evader: EvaderState,
    pub step_index: usize,
    pub task: TaskParams,
}

impl WorldState {
    /// Agents at rest on their spawn points, clock at zero.
    pub fn initial(task: &TaskParams) -> Self {
        Self {
            drones: task
                .external
                .drone_spawns
                .iter()
                .map(|p| DroneState::at_rest(*p))
                .collect(),
            evader: EvaderState {
                position: task.external.evader_spawn,
                velocity: Vec3::zeros(),
                last_heading: None,
            },
            step_index: 0,
            task: task.clone(),
        }
    }
}

/// How obstacle heights are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightDistribution {
    /// Uniform choice from a finite set.
    Discrete(Vec<f64>),
    /// Uniform on (0, max].
    Continuous { max: f64 },
}

impl Default for HeightDistribution {
    fn default() -> Self {
        HeightDistribution::Discrete(vec![0.6, 1.2])
    }
}

impl HeightDistribution {
    fn sample(&self, rng: &mut SimRng) -> f64 {
        match self {
            HeightDistribution::Discrete(set) => set[rng.random_range(0..set.len())],
            HeightDistribution::Continuous { max } => max * (1.0 - rng.random::<f64>()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationConfig {
    pub arena: ArenaSpec,
    pub drone_count: usize,
    pub max_obstacles: usize,
    pub min_obstacles: usize,
    pub obstacle_radius: f64,
    pub obstacle_heights: HeightDistribution,
    /// Spawn altitudes are uniform on [spawn_z_min, spawn_z_max].
    pub spawn_z_min: f64,
    pub spawn_z_max: f64,
    pub min_separation: f64,
    /// Attempt budget shared by all rejection loops of one sample.
    pub max_attempts: usize,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            arena: ArenaSpec::default(),
            drone_count: 4,
            max_obstacles: 3,
            min_obstacles: 0,
            obstacle_radius: 0.3,
            obstacle_heights: HeightDistribution::default(),
            spawn_z_min: DRONE_SIZE,
            spawn_z_max: 1.2 - DRONE_SIZE,
            min_separation: DEFAULT_SPAWN_SEPARATION,
            max_attempts: 10_000,
        }
    }
}

impl RandomizationConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        self.arena.validate()?;
        if self.drone_count == 0 {
            return Err(invalid("drone_count", "must be at least 1"));
        }
        if self.min_obstacles > self.max_obstacles {
            return Err(invalid("min_obstacles", "exceeds max_obstacles"));
        }
        if !(self.obstacle_radius > 0.0 && self.obstacle_radius <= self.arena.radius) {
            return Err(invalid("obstacle_radius", "must lie in (0, arena radius]"));
        }
        match &self.obstacle_heights {
            HeightDistribution::Discrete(set) => {
                if set.is_empty() {
                    return Err(invalid("obstacle_heights", "empty height set"));
                }
                if let Some(h) = set.iter().find(|h| !(**h > 0.0 && **h <= self.arena.height)) {
                    return Err(invalid(
                        "obstacle_heights",
                        format!("height {h} outside (0, arena height]"),
                    ));
                }
            }
            HeightDistribution::Continuous { max } => {
                if !(*max > 0.0 && *max <= self.arena.height) {
                    return Err(invalid("obstacle_heights.max", "must lie in (0, arena height]"));
                }
            }
        }
        if !(0.0 <= self.spawn_z_min && self.spawn_z_min <= self.spawn_z_max && self.spawn_z_max <= self.arena.height) {
            return Err(invalid("spawn_z_min", "spawn altitude band must lie within the arena"));
        }
        Ok(())
    }
}

fn uniform_in_disk(rng: &mut SimRng, radius: f64) -> Vector2<f64> {
    loop {
        let x = rng.random_range(-1.0..=1.0);
        let y = rng.random_range(-1.0..=1.0);
        let p = Vector2::new(x, y);
        if p.norm_squared() <= 1.0 {
            return p * radius;
        }
    }
}

/// Draw spawn points for `cfg.drone_count` drones followed by the evader,
/// avoiding obstacle volumes and keeping the configured separation. Spawns
/// stay one drone size inside the wall so their grid cells are never rim cells.
pub fn sample_spawns(
    rng: &mut SimRng,
    cfg: &RandomizationConfig,
    obstacles: &[Obstacle],
) -> Result<(Vec<Vec3>, Vec3), WorldError> {
    let total = cfg.drone_count + 1;
    let mut placed: Vec<Vec3> = Vec::with_capacity(total);
    let mut attempts = 0;
    while placed.len() < total {
        attempts += 1;
        if attempts > cfg.max_attempts {
            return Err(WorldError::SamplingExhausted {
                attempts: cfg.max_attempts,
                what: "spawn points",
            });
        }
        let xy = uniform_in_disk(rng, cfg.arena.radius - DRONE_SIZE);
        let z = if cfg.spawn_z_max > cfg.spawn_z_min {
            rng.random_range(cfg.spawn_z_min..=cfg.spawn_z_max)
        } else {
            cfg.spawn_z_min
        };
        let p = Vec3::new(xy.x, xy.y, z);
        if obstacles.iter().any(|o| o.contains(&p)) {
            continue;
        }
        if placed.iter().any(|q| (p - q).norm() < cfg.min_separation) {
            continue;
        }
        placed.push(p);
    }
    let evader = placed.pop().expect("at least the evader was placed");
    Ok((placed, evader))
}

/// Domain-randomized scenario layout. Not guaranteed feasible.
pub fn sample_external_params(rng: &mut SimRng, cfg: &RandomizationConfig) -> Result<ExternalParams, WorldError> {
    cfg.validate()?;
    let count = rng.random_range(cfg.min_obstacles..=cfg.max_obstacles);
    let center_radius = cfg.arena.radius - cfg.obstacle_radius;
    let obstacles: Vec<Obstacle> = (0..count)
        .map(|_| {
            let c = uniform_in_disk(rng, center_radius);
            Obstacle {
                x: c.x,
                y: c.y,
                radius: cfg.obstacle_radius,
                height: cfg.obstacle_heights.sample(rng),
            }
        })
        .collect();
    let (drone_spawns, evader_spawn) = sample_spawns(rng, cfg, &obstacles)?;
    Ok(ExternalParams {
        drone_spawns,
        evader_spawn,
        obstacles,
    })
}

impl fmt::Display for TaskParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "d_c={} v_e={} drones={} obstacles={}",
            self.intrinsic.capture_radius,
            self.intrinsic.evader_speed,
            self.drone_count(),
            self.external.obstacles.len()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_obstacles_gives_only_spawns() {
        let cfg = RandomizationConfig {
            max_obstacles: 0,
            drone_count: 3,
            ..Default::default()
        };
        let mut rng = seeded_rng(7);
        let ext = sample_external_params(&mut rng, &cfg).unwrap();
        assert_eq!(ext.drone_spawns.len(), 3);
        assert!(ext.obstacles.is_empty());
        for p in ext.drone_spawns.iter().chain(std::iter::once(&ext.evader_spawn)) {
            assert!(cfg.arena.contains(p));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = RandomizationConfig::default();
        let a = sample_external_params(&mut seeded_rng(42), &cfg).unwrap();
        let b = sample_external_params(&mut seeded_rng(42), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn obstacle_count_is_uniform() {
        let cfg = RandomizationConfig::default();
        let mut rng = seeded_rng(3);
        let mut hist = [0usize; 4];
        let n = 10_000;
        for _ in 0..n {
            hist[sample_external_params(&mut rng, &cfg).unwrap().obstacles.len()] += 1;
        }
        let expected = n as f64 / 4.0;
        let chi2: f64 = hist.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 3 dof, p = 0.001 critical value
        assert!(chi2 < 16.27, "chi2 = {chi2}, hist = {hist:?}");
        for c in hist {
            assert!((c as f64 / n as f64 - 0.25).abs() <= 0.02, "{hist:?}");
        }
    }

    #[test]
    fn heights_come_from_the_configured_set() {
        let cfg = RandomizationConfig {
            min_obstacles: 3,
            ..Default::default()
        };
        let mut rng = seeded_rng(5);
        for _ in 0..200 {
            for o in sample_external_params(&mut rng, &cfg).unwrap().obstacles {
                assert!(o.height == 0.6 || o.height == 1.2);
            }
        }
    }

    #[test]
    fn continuous_heights_stay_in_range() {
        let cfg = RandomizationConfig {
            min_obstacles: 3,
            obstacle_heights: HeightDistribution::Continuous { max: 1.2 },
            ..Default::default()
        };
        let mut rng = seeded_rng(5);
        for _ in 0..200 {
            for o in sample_external_params(&mut rng, &cfg).unwrap().obstacles {
                assert!(o.height > 0.0 && o.height <= 1.2);
            }
        }
    }

    #[test]
    fn overcrowded_config_reports_exhaustion() {
        let cfg = RandomizationConfig {
            drone_count: 200,
            max_attempts: 500,
            ..Default::default()
        };
        let err = sample_external_params(&mut seeded_rng(1), &cfg).unwrap_err();
        assert!(matches!(err, WorldError::SamplingExhausted { .. }));
    }

    #[test]
    fn presets_load() {
        for name in PRESET_NAMES {
            let task = load_preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(task.arena, ArenaSpec::default());
        }
        assert!(load_preset("empty").unwrap().external.obstacles.is_empty());
        let tower = load_preset("tower1").unwrap();
        assert_eq!(tower.external.obstacles.len(), 1);
        assert_eq!(tower.external.obstacles[0].height, 1.2);
        assert!(tower.external.obstacles[0].center().norm() < 0.1);
        assert!(matches!(load_preset("maze"), Err(WorldError::UnknownPreset(_))));
    }

    #[test]
    fn too_tall_obstacle_is_rejected_with_path() {
        let doc = r#"{"arena":{"radius":0.9,"height":1.2},
            "intrinsic":{"capture_radius":0.12,"evader_speed":2.4},
            "drones":[[0.5,0.0,0.6]],"evader":[-0.5,0.0,0.6],
            "obstacles":[{"x":0.0,"y":0.0,"radius":0.3,"height":1.5}]}"#;
        match load_scenario(doc) {
            Err(WorldError::Invalid { path, .. }) => assert_eq!(path, "obstacles[0].height"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_document_is_rejected() {
        assert!(matches!(load_scenario("{\"arena\": 3}"), Err(WorldError::Malformed(_))));
        assert!(matches!(load_scenario("not json"), Err(WorldError::Malformed(_))));
    }

    #[test]
    fn spawn_inside_obstacle_is_rejected() {
        let doc = r#"{"arena":{"radius":0.9,"height":1.2},
            "intrinsic":{"capture_radius":0.12,"evader_speed":2.4},
            "drones":[[0.05,0.0,0.3]],"evader":[-0.7,0.0,0.6],
            "obstacles":[{"x":0.0,"y":0.0,"radius":0.3,"height":0.6}]}"#;
        match load_scenario(doc) {
            Err(WorldError::Invalid { path, .. }) => assert_eq!(path, "drones[0]"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn closest_point_on_cylinder() {
        let o = Obstacle {
            x: 0.6,
            y: 0.0,
            radius: 0.3,
            height: 0.6,
        };
        let side = o.closest_point(&Vec3::new(-0.1, 0.0, 0.3));
        assert!((side - Vec3::new(0.3, 0.0, 0.3)).norm() < 1e-12);
        let above = o.closest_point(&Vec3::new(0.6, 0.1, 1.0));
        assert!((above - Vec3::new(0.6, 0.1, 0.6)).norm() < 1e-12);
        let rim = o.closest_point(&Vec3::new(1.0, 0.0, 1.0));
        assert!((rim - Vec3::new(0.9, 0.0, 0.6)).norm() < 1e-12);
        assert_eq!(o.distance_to(&Vec3::new(0.6, 0.0, 0.3)), 0.0);
    }
}
