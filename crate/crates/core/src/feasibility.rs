//! Task filter: rasterize a layout onto a 2-D occupancy grid and check by
//! depth-first search that every drone can reach the evader.
//!
//! Only obstacles as tall as the arena block cells; anything shorter can be
//! flown over. Obstacle footprints are inflated by half a drone so that a
//! free corridor is wide enough for a drone to pass.

use std::fmt::Write as _;

use nalgebra::Vector2;
use thiserror::Error;

use crate::world::{
    sample_external_params, sample_spawns, ArenaSpec, ExternalParams, RandomizationConfig, SimRng, TaskParams, Vec3,
    WorldError, DRONE_SIZE,
};

#[derive(Debug, Error)]
pub enum FeasibilityError {
    #[error(transparent)]
    Sampling(#[from] WorldError),
    #[error("no feasible layout found in {attempts} attempts")]
    Exhausted { attempts: usize },
}

pub type Cell = (usize, usize);

#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    /// World xy of the corner of cell (0, 0).
    pub origin: Vector2<f64>,
    /// Row-major, `true` = blocked.
    pub cells: Vec<bool>,
}

impl OccupancyGrid {
    fn index(&self, (col, row): Cell) -> usize {
        row * self.width + col
    }

    pub fn is_blocked(&self, cell: Cell) -> bool {
        self.cells[self.index(cell)]
    }

    pub fn set_blocked(&mut self, cell: Cell, blocked: bool) {
        let i = self.index(cell);
        self.cells[i] = blocked;
    }

    pub fn contains(&self, (col, row): Cell) -> bool {
        col < self.width && row < self.height
    }

    pub fn cell_center(&self, (col, row): Cell) -> Vector2<f64> {
        self.origin + Vector2::new(col as f64 + 0.5, row as f64 + 0.5) * self.cell_size
    }

    /// Cell containing world point `p`, if any.
    pub fn cell_of(&self, p: &Vec3) -> Option<Cell> {
        let rel = (p.xy() - self.origin) / self.cell_size;
        if rel.x < 0.0 || rel.y < 0.0 {
            return None;
        }
        let cell = (rel.x.floor() as usize, rel.y.floor() as usize);
        self.contains(cell).then_some(cell)
    }

    /// 4-connected free neighbours.
    pub fn neighbours(&self, (col, row): Cell) -> impl Iterator<Item = Cell> + '_ {
        let candidates = [
            col.checked_sub(1).map(|c| (c, row)),
            (col + 1 < self.width).then_some((col + 1, row)),
            row.checked_sub(1).map(|r| (col, r)),
            (row + 1 < self.height).then_some((col, row + 1)),
        ];
        candidates.into_iter().flatten().filter(move |c| !self.is_blocked(*c))
    }

    pub fn blocked_count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    /// Top-down text view, +y up: `#` blocked, `.` free.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for row in (0..self.height).rev() {
            for col in 0..self.width {
                out.push(if self.is_blocked((col, row)) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    /// Same as `render` with drone cells marked `D` and the evader `E`.
    pub fn render_with(&self, drones: &[Cell], evader: Option<Cell>) -> String {
        let mut out = String::new();
        for row in (0..self.height).rev() {
            for col in 0..self.width {
                let c = (col, row);
                let ch = if Some(c) == evader {
                    'E'
                } else if drones.contains(&c) {
                    'D'
                } else if self.is_blocked(c) {
                    '#'
                } else {
                    '.'
                };
                let _ = write!(out, "{ch}");
            }
            out.push('\n');
        }
        out
    }
}

fn distance_to_rect(p: Vector2<f64>, lo: Vector2<f64>, hi: Vector2<f64>) -> f64 {
    let dx = (lo.x - p.x).max(0.0).max(p.x - hi.x);
    let dy = (lo.y - p.y).max(0.0).max(p.y - hi.y);
    dx.hypot(dy)
}

/// Whether an obstacle of this height cannot be flown over.
pub fn is_impassable(height: f64, arena: &ArenaSpec) -> bool {
    height >= arena.height - 1e-9
}

pub fn rasterize(external: &ExternalParams, arena: &ArenaSpec, cell_size: f64) -> OccupancyGrid {
    assert!(cell_size > 0.0, "cell size must be positive");
    let n = ((2.0 * arena.radius / cell_size) - 1e-9).ceil().max(1.0) as usize;
    let half_extent = n as f64 * cell_size / 2.0;
    let mut grid = OccupancyGrid {
        cell_size,
        width: n,
        height: n,
        origin: Vector2::new(-half_extent, -half_extent),
        cells: vec![false; n * n],
    };
    let inflate = DRONE_SIZE / 2.0;
    let walls: Vec<_> = external
        .obstacles
        .iter()
        .filter(|o| is_impassable(o.height, arena))
        .collect();

    for row in 0..n {
        for col in 0..n {
            let center = grid.cell_center((col, row));
            let lo = grid.origin + Vector2::new(col as f64, row as f64) * cell_size - Vector2::repeat(inflate);
            let hi = lo + Vector2::repeat(cell_size + 2.0 * inflate);
            let blocked =
                center.norm() > arena.radius || walls.iter().any(|o| distance_to_rect(o.center(), lo, hi) < o.radius);
            grid.set_blocked((col, row), blocked);
        }
    }
    grid
}

/// True iff every drone cell reaches the evader cell through free,
/// 4-connected cells. Iterative DFS from the evader.
pub fn is_feasible(grid: &OccupancyGrid, drone_cells: &[Cell], evader_cell: Cell) -> bool {
    if grid.is_blocked(evader_cell) || drone_cells.iter().any(|c| grid.is_blocked(*c)) {
        return false;
    }
    let mut visited = vec![false; grid.cells.len()];
    let mut stack = vec![evader_cell];
    visited[grid.index(evader_cell)] = true;
    while let Some(cell) = stack.pop() {
        for next in grid.neighbours(cell) {
            let i = grid.index(next);
            if !visited[i] {
                visited[i] = true;
                stack.push(next);
            }
        }
    }
    drone_cells.iter().all(|c| visited[grid.index(*c)])
}

/// Spawn cells of a layout; `None` if any spawn falls off the grid.
pub fn spawn_cells(grid: &OccupancyGrid, external: &ExternalParams) -> Option<(Vec<Cell>, Cell)> {
    let drones = external
        .drone_spawns
        .iter()
        .map(|p| grid.cell_of(p))
        .collect::<Option<Vec<_>>>()?;
    Some((drones, grid.cell_of(&external.evader_spawn)?))
}

pub fn is_layout_feasible(external: &ExternalParams, arena: &ArenaSpec) -> bool {
    let grid = rasterize(external, arena, DRONE_SIZE);
    spawn_cells(&grid, external).is_some_and(|(drones, evader)| is_feasible(&grid, &drones, evader))
}

/// Draw domain-randomized layouts until one passes the filter.
pub fn task_filter_sample(rng: &mut SimRng, cfg: &RandomizationConfig) -> Result<ExternalParams, FeasibilityError> {
    for _ in 0..cfg.max_attempts {
        let external = sample_external_params(rng, cfg)?;
        if is_layout_feasible(&external, &cfg.arena) {
            return Ok(external);
        }
    }
    Err(FeasibilityError::Exhausted {
        attempts: cfg.max_attempts,
    })
}

/// Sampler for the filtered layout distribution.
#[derive(Clone, Debug)]
pub struct TaskFilter {
    pub config: RandomizationConfig,
}

impl TaskFilter {
    pub fn new(config: RandomizationConfig) -> Self {
        Self { config }
    }

    pub fn sample(&self, rng: &mut SimRng) -> Result<ExternalParams, FeasibilityError> {
        task_filter_sample(rng, &self.config)
    }
}

/// Keep the obstacles of `template` and draw fresh feasible spawn points for
/// the same number of drones.
pub fn respawn(template: &TaskParams, rng: &mut SimRng, max_attempts: usize) -> Result<TaskParams, FeasibilityError> {
    let cfg = RandomizationConfig {
        arena: template.arena,
        drone_count: template.drone_count(),
        spawn_z_max: template.arena.height - DRONE_SIZE,
        max_attempts,
        ..Default::default()
    };
    let grid = rasterize(&template.external, &template.arena, DRONE_SIZE);
    for _ in 0..max_attempts {
        let (drone_spawns, evader_spawn) = sample_spawns(rng, &cfg, &template.external.obstacles)?;
        let external = ExternalParams {
            drone_spawns,
            evader_spawn,
            obstacles: template.external.obstacles.clone(),
        };
        if spawn_cells(&grid, &external).is_some_and(|(d, e)| is_feasible(&grid, &d, e)) {
            return Ok(TaskParams {
                external,
                ..template.clone()
            });
        }
    }
    Err(FeasibilityError::Exhausted { attempts: max_attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{seeded_rng, HeightDistribution, Obstacle};
    use std::collections::VecDeque;

    fn layout(obstacles: Vec<Obstacle>) -> ExternalParams {
        ExternalParams {
            drone_spawns: vec![Vec3::new(-0.7, 0.0, 0.6)],
            evader_spawn: Vec3::new(0.7, 0.0, 0.6),
            obstacles,
        }
    }

    /// Independent oracle: breadth-first flood fill from the first drone.
    fn bfs_feasible(grid: &OccupancyGrid, drones: &[Cell], evader: Cell) -> bool {
        let mut ok = !grid.is_blocked(evader);
        for &start in drones {
            if !ok || grid.is_blocked(start) {
                return false;
            }
            let mut seen = vec![vec![false; grid.width]; grid.height];
            let mut queue = VecDeque::from([start]);
            seen[start.1][start.0] = true;
            let mut found = false;
            while let Some((c, r)) = queue.pop_front() {
                if (c, r) == evader {
                    found = true;
                    break;
                }
                let mut push = |c: usize, r: usize| {
                    if c < grid.width && r < grid.height && !seen[r][c] && !grid.is_blocked((c, r)) {
                        seen[r][c] = true;
                        queue.push_back((c, r));
                    }
                };
                push(c + 1, r);
                push(c, r + 1);
                if c > 0 {
                    push(c - 1, r);
                }
                if r > 0 {
                    push(c, r - 1);
                }
            }
            ok &= found;
        }
        ok
    }

    /// Oracle: a cell is blocked if any of 100x100 points spread over its
    /// inflated footprint lies inside the obstacle disk.
    fn point_sampled_blocked(grid: &OccupancyGrid, cell: Cell, o: &Obstacle) -> bool {
        let half = DRONE_SIZE / 2.0;
        let lo = grid.origin + Vector2::new(cell.0 as f64, cell.1 as f64) * grid.cell_size - Vector2::repeat(half);
        let side = grid.cell_size + 2.0 * half;
        (0..100).any(|i| {
            (0..100).any(|j| {
                let p = lo + Vector2::new(i as f64 / 99.0, j as f64 / 99.0) * side;
                (p - o.center()).norm() < o.radius
            })
        })
    }

    #[test]
    fn empty_arena_blocks_only_outside_cells() {
        let arena = ArenaSpec::default();
        let grid = rasterize(&layout(vec![]), &arena, 0.1);
        assert_eq!((grid.width, grid.height), (18, 18));
        for row in 0..18 {
            for col in 0..18 {
                let outside = grid.cell_center((col, row)).norm() > arena.radius;
                assert_eq!(grid.is_blocked((col, row)), outside);
            }
        }
    }

    #[test]
    fn central_tower_matches_point_sampling() {
        let arena = ArenaSpec::default();
        for o in [
            Obstacle {
                x: 0.0,
                y: 0.0,
                radius: 0.3,
                height: 1.2,
            },
            Obstacle {
                x: 0.23,
                y: -0.31,
                radius: 0.3,
                height: 1.2,
            },
        ] {
            let grid = rasterize(&layout(vec![o]), &arena, 0.1);
            let empty = rasterize(&layout(vec![]), &arena, 0.1);
            let mut obstacle_cells = 0;
            for row in 0..grid.height {
                for col in 0..grid.width {
                    let c = (col, row);
                    if empty.is_blocked(c) {
                        continue;
                    }
                    let expected = point_sampled_blocked(&grid, c, &o);
                    assert_eq!(grid.is_blocked(c), expected, "cell {c:?}");
                    obstacle_cells += expected as usize;
                }
            }
            assert!(obstacle_cells > 0);
        }
    }

    #[test]
    fn short_obstacle_blocks_nothing() {
        let arena = ArenaSpec::default();
        let short = rasterize(
            &layout(vec![Obstacle {
                x: 0.0,
                y: 0.0,
                radius: 0.3,
                height: 0.6,
            }]),
            &arena,
            0.1,
        );
        assert_eq!(short, rasterize(&layout(vec![]), &arena, 0.1));
    }

    fn wall(height: f64) -> Vec<Obstacle> {
        // three overlapping cylinders across the diameter along the y axis
        [-0.6, 0.0, 0.6]
            .into_iter()
            .map(|y| Obstacle {
                x: 0.0,
                y,
                radius: 0.3,
                height,
            })
            .collect()
    }

    #[test]
    fn full_height_wall_is_infeasible() {
        assert!(!is_layout_feasible(&layout(wall(1.2)), &ArenaSpec::default()));
    }

    #[test]
    fn half_height_wall_is_feasible() {
        assert!(is_layout_feasible(&layout(wall(0.6)), &ArenaSpec::default()));
    }

    #[test]
    fn same_cell_is_trivially_feasible() {
        let grid = rasterize(&layout(vec![]), &ArenaSpec::default(), 0.1);
        assert!(is_feasible(&grid, &[(9, 9)], (9, 9)));
        assert!(!is_feasible(&grid, &[(0, 0)], (9, 9)));
    }

    #[test]
    fn empty_layouts_are_always_accepted() {
        let cfg = RandomizationConfig {
            max_obstacles: 0,
            ..Default::default()
        };
        let mut rng = seeded_rng(11);
        for _ in 0..100 {
            let ext = sample_external_params(&mut rng, &cfg).unwrap();
            assert!(is_layout_feasible(&ext, &cfg.arena));
        }
    }

    #[test]
    fn accepted_samples_pass_the_flood_fill_oracle() {
        let cfg = RandomizationConfig::default();
        let mut rng = seeded_rng(2024);
        for _ in 0..10_000 {
            let ext = task_filter_sample(&mut rng, &cfg).unwrap();
            let grid = rasterize(&ext, &cfg.arena, DRONE_SIZE);
            let (d, e) = spawn_cells(&grid, &ext).unwrap();
            assert!(bfs_feasible(&grid, &d, e));
        }
    }

    #[test]
    fn walled_off_config_exhausts() {
        // one arena-sized tower; spawns sit on its roof so sampling succeeds
        // but no spawn cell is ever free
        let cfg = RandomizationConfig {
            min_obstacles: 1,
            max_obstacles: 1,
            obstacle_radius: 0.9,
            obstacle_heights: HeightDistribution::Discrete(vec![1.2]),
            spawn_z_min: 1.2,
            spawn_z_max: 1.2,
            min_separation: 0.0,
            max_attempts: 50,
            ..Default::default()
        };
        let err = task_filter_sample(&mut seeded_rng(1), &cfg).unwrap_err();
        assert!(matches!(err, FeasibilityError::Exhausted { attempts: 50 }));
    }

    #[test]
    fn respawn_keeps_obstacles() {
        let template = crate::world::load_preset("tower3").unwrap();
        let t = respawn(&template, &mut seeded_rng(9), 1000).unwrap();
        assert_eq!(t.external.obstacles, template.external.obstacles);
        assert_eq!(t.drone_count(), template.drone_count());
        assert!(is_layout_feasible(&t.external, &t.arena));
        t.validate().unwrap();
    }

    #[test]
    fn render_shows_blocked_cells() {
        let grid = rasterize(&layout(wall(1.2)), &ArenaSpec::default(), 0.1);
        let art = grid.render();
        assert_eq!(art.lines().count(), 18);
        assert!(art.lines().all(|l| l.len() == 18));
        assert_eq!(art.matches('#').count(), grid.blocked_count());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_grid() -> impl Strategy<Value = (OccupancyGrid, Vec<Cell>, Cell)> {
            (2usize..16, 2usize..16).prop_flat_map(|(w, h)| {
                (
                    prop::collection::vec(prop::bool::weighted(0.35), w * h),
                    prop::collection::vec((0..w, 0..h), 1..5),
                    (0..w, 0..h),
                )
                    .prop_map(move |(cells, drones, evader)| {
                        let grid = OccupancyGrid {
                            cell_size: 0.1,
                            width: w,
                            height: h,
                            origin: Vector2::zeros(),
                            cells,
                        };
                        (grid, drones, evader)
                    })
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(2000))]

            #[test]
            fn dfs_agrees_with_bfs((grid, drones, evader) in random_grid()) {
                prop_assert_eq!(is_feasible(&grid, &drones, evader), bfs_feasible(&grid, &drones, evader));
            }

            #[test]
            fn unblocking_never_breaks_feasibility((grid, drones, evader) in random_grid(), pick in any::<prop::sample::Index>()) {
                let mut freer = grid.clone();
                let i = pick.index(freer.cells.len());
                freer.cells[i] = false;
                if is_feasible(&grid, &drones, evader) {
                    prop_assert!(is_feasible(&freer, &drones, evader));
                }
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(500))]

            #[test]
            fn raising_obstacles_never_helps(seed in any::<u64>(), which in any::<prop::sample::Index>()) {
                let cfg = RandomizationConfig { min_obstacles: 1, ..Default::default() };
                let ext = sample_external_params(&mut seeded_rng(seed), &cfg).unwrap();
                let mut raised = ext.clone();
                let i = which.index(raised.obstacles.len());
                raised.obstacles[i].height = cfg.arena.height;
                if !is_layout_feasible(&ext, &cfg.arena) {
                    prop_assert!(!is_layout_feasible(&raised, &cfg.arena));
                }
            }
        }
    }
}
