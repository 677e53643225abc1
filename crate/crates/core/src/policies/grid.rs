use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{PolicyConfig, PolicyError};
use crate::episode::{aggregate_metrics, run_batch, EngineConfig, EpisodeError, Metrics, SpawnMode};
use crate::world::TaskParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyFamily {
    Janosov,
    Apf,
}

impl PolicyFamily {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "janosov" => Some(PolicyFamily::Janosov),
            "apf" => Some(PolicyFamily::Apf),
            _ => None,
        }
    }

    fn default_config(self) -> PolicyConfig {
        match self {
            PolicyFamily::Janosov => PolicyConfig::Janosov(Default::default()),
            PolicyFamily::Apf => PolicyConfig::Apf(Default::default()),
        }
    }
}

/// Candidate values per hyperparameter name. Cells enumerate the cartesian
/// product with keys in lexicographic order, the last key varying fastest.
pub type ParameterGrid = BTreeMap<String, Vec<f64>>;

/// Expand a grid into concrete configurations, in grid order.
pub fn expand_grid(family: PolicyFamily, grid: &ParameterGrid) -> Result<Vec<PolicyConfig>, PolicyError> {
    let base = serde_json::to_value(family.default_config()).expect("policy configs serialize");
    let mut cells = vec![base];
    for (name, values) in grid {
        if values.is_empty() {
            return Err(PolicyError::Config(format!("no values for `{name}`")));
        }
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c[name.as_str()] = if name == "command_delay_steps" {
                        serde_json::json!(*v as u64)
                    } else {
                        serde_json::json!(v)
                    };
                    c
                })
            })
            .collect();
    }
    cells
        .into_iter()
        .map(|v| {
            let cfg: PolicyConfig = serde_json::from_value(v).map_err(|e| PolicyError::Config(e.to_string()))?;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub config: PolicyConfig,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: PolicyConfig,
    pub best_index: usize,
    pub table: Vec<GridCell>,
}

/// Score every cell over every task and keep the highest capture rate,
/// breaking ties by lower mean capture timestep and then by grid order.
pub fn grid_search(
    cells: &[PolicyConfig],
    tasks: &[TaskParams],
    episodes_per_task: usize,
    seed: u64,
    engine: &EngineConfig,
    workers: Option<usize>,
) -> Result<GridSearchResult, EpisodeError> {
    if cells.is_empty() {
        return Err(EpisodeError::PolicyConfig(PolicyError::Config(
            "empty parameter grid".into(),
        )));
    }
    let mut table = Vec::with_capacity(cells.len());
    for cfg in cells {
        let mut results = Vec::new();
        for (k, task) in tasks.iter().enumerate() {
            let run_seed = seed.wrapping_add(k as u64);
            let batch = run_batch(
                task,
                SpawnMode::Randomized,
                cfg,
                episodes_per_task,
                run_seed,
                engine,
                workers,
            )?;
            results.extend(batch.into_iter().map(|o| o.result));
        }
        table.push(GridCell {
            config: cfg.clone(),
            metrics: aggregate_metrics(&results)?,
        });
    }
    let mut best_index = 0;
    for (i, cell) in table.iter().enumerate().skip(1) {
        let best = &table[best_index].metrics;
        let m = &cell.metrics;
        if m.capture_rate > best.capture_rate
            || (m.capture_rate == best.capture_rate && m.mean_capture_timestep < best.mean_capture_timestep)
        {
            best_index = i;
        }
    }
    Ok(GridSearchResult {
        best: table[best_index].config.clone(),
        best_index,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::ApfParams;
    use crate::world::{load_preset, IntrinsicParams};

    #[test]
    fn expands_cartesian_product_in_order() {
        let mut grid = ParameterGrid::new();
        grid.insert("attract_gain".into(), vec![0.5, 1.0]);
        grid.insert("peer_repulsion_gain".into(), vec![0.0, 0.1, 0.2]);
        let cells = expand_grid(PolicyFamily::Apf, &grid).unwrap();
        assert_eq!(cells.len(), 6);
        match (&cells[0], &cells[5]) {
            (PolicyConfig::Apf(a), PolicyConfig::Apf(b)) => {
                assert_eq!((a.attract_gain, a.peer_repulsion_gain), (0.5, 0.0));
                assert_eq!((b.attract_gain, b.peer_repulsion_gain), (1.0, 0.2));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let mut grid = ParameterGrid::new();
        grid.insert("warp_factor".into(), vec![9.0]);
        assert!(expand_grid(PolicyFamily::Apf, &grid).is_err());
        assert!(grid_search(&[], &[], 1, 0, &EngineConfig::default(), None).is_err());
    }

    #[test]
    fn pursuit_beats_standing_still() {
        let task = load_preset("empty")
            .unwrap()
            .with_intrinsic(IntrinsicParams::new(0.6, 0.0));
        let still = PolicyConfig::Apf(ApfParams {
            attract_gain: 0.0,
            obstacle_repulsion_gain: 0.0,
            peer_repulsion_gain: 0.0,
            ..Default::default()
        });
        let chase = PolicyConfig::Apf(ApfParams::default());
        let out = grid_search(&[still, chase.clone()], &[task], 20, 1, &EngineConfig::default(), None).unwrap();
        assert_eq!(out.best, chase);
        assert_eq!(out.best_index, 1);
        assert!(out.table[0].metrics.capture_rate < out.table[1].metrics.capture_rate);
    }

    #[test]
    fn single_cell_returns_itself() {
        let task = load_preset("empty").unwrap();
        let cfg = PolicyConfig::Apf(ApfParams::default());
        let out = grid_search(
            std::slice::from_ref(&cfg),
            std::slice::from_ref(&task),
            5,
            3,
            &EngineConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(out.best, cfg);
        let direct = run_batch(&task, SpawnMode::Randomized, &cfg, 5, 3, &EngineConfig::default(), None).unwrap();
        let m = aggregate_metrics(&direct.into_iter().map(|o| o.result).collect::<Vec<_>>()).unwrap();
        assert_eq!(out.table[0].metrics, m);
    }
}
