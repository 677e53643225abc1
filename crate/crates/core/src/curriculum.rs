//! Dual curriculum driver.
//!
//! The intrinsic side walks a fixed sequence of (capture radius, evader
//! speed) phases from easy to hard and advances when an evaluation batch
//! reaches the success threshold. The external side keeps an archive of
//! layouts the current policy failed on and mixes archive draws with fresh
//! feasible layouts when building each training batch.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{run_tasks, EngineConfig, EpisodeError, EpisodeResult};
use crate::feasibility::{FeasibilityError, TaskFilter};
use crate::policies::PolicyConfig;
use crate::world::{ExternalParams, IntrinsicParams, RandomizationConfig, SimRng, TaskParams};

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("invalid phase interval: {0}")]
    Interval(String),
    #[error("invalid curriculum config: {0}")]
    Config(String),
    #[error(transparent)]
    Sampling(#[from] FeasibilityError),
    #[error("trainer failed: {0}")]
    Trainer(#[from] TrainerError),
    #[error("report sink: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("trainer returned {got} results for {expected} tasks")]
    ResultCount { expected: usize, got: usize },
    #[error("{0}")]
    Other(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSequence {
    pub phases: Vec<IntrinsicParams>,
    pub current: usize,
}

impl PhaseSequence {
    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn last_index(&self) -> usize {
        self.phases.len() - 1
    }

    pub fn current_params(&self) -> IntrinsicParams {
        self.phases[self.current]
    }

    /// Move to the next phase, saturating at the last one.
    pub fn advance(&mut self) {
        self.current = (self.current + 1).min(self.last_index());
    }
}

fn ramp(from: f64, to: f64, parts: usize) -> impl Iterator<Item = f64> {
    let delta = to - from;
    (1..=parts).map(move |k| {
        if k == parts {
            to
        } else {
            from + delta * k as f64 / parts as f64
        }
    })
}

/// Phase sequence: the evader speed ramps from its initial to its target
/// value in `parts` equal steps at the initial capture radius, then the
/// capture radius shrinks to its target in `parts` equal steps. An empty
/// interval contributes no phases.
pub fn get_order(
    initial: IntrinsicParams,
    target: IntrinsicParams,
    parts: usize,
) -> Result<PhaseSequence, CurriculumError> {
    if parts == 0 {
        return Err(CurriculumError::Interval("parts must be at least 1".into()));
    }
    if !(target.capture_radius > 0.0 && initial.capture_radius >= target.capture_radius) {
        return Err(CurriculumError::Interval(format!(
            "capture radius must shrink from {} to a positive {}",
            initial.capture_radius, target.capture_radius
        )));
    }
    if !(initial.evader_speed >= 0.0 && target.evader_speed >= initial.evader_speed) {
        return Err(CurriculumError::Interval(format!(
            "evader speed must grow from a non-negative {} to {}",
            initial.evader_speed, target.evader_speed
        )));
    }
    let mut phases = vec![initial];
    if target.evader_speed > initial.evader_speed {
        phases.extend(
            ramp(initial.evader_speed, target.evader_speed, parts)
                .map(|v| IntrinsicParams::new(initial.capture_radius, v)),
        );
    }
    if target.capture_radius < initial.capture_radius {
        phases.extend(
            ramp(initial.capture_radius, target.capture_radius, parts)
                .map(|d| IntrinsicParams::new(d, target.evader_speed)),
        );
    }
    Ok(PhaseSequence { phases, current: 0 })
}

/// Bounded pool of layouts the policy failed to solve.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveArchive {
    items: Vec<ExternalParams>,
    capacity: usize,
}

impl ActiveArchive {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: Vec::with_capacity(capacity.min(4096)),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn items(&self) -> &[ExternalParams] {
        &self.items
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    /// Insert, evicting a uniformly chosen existing element when full.
    pub fn push(&mut self, item: ExternalParams, rng: &mut SimRng) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() >= self.capacity {
            let victim = rng.random_range(0..self.items.len());
            self.items.swap_remove(victim);
        }
        self.items.push(item);
    }

    pub fn sample(&self, rng: &mut SimRng) -> Option<&ExternalParams> {
        (!self.items.is_empty()).then(|| &self.items[rng.random_range(0..self.items.len())])
    }
}

/// Archive every layout whose episode earned no capture bonus.
pub fn update_active_archive(archive: &mut ActiveArchive, batch: &[EpisodeResult], rng: &mut SimRng) {
    for result in batch.iter().filter(|r| r.capture_return == 0.0) {
        archive.push(result.task.external.clone(), rng);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalSource {
    Archive,
    Valid,
}

/// With probability `p` (and a non-empty archive) replay an archived
/// layout, otherwise draw a fresh feasible one.
pub fn select_external(
    archive: &ActiveArchive,
    valid: &TaskFilter,
    p: f64,
    rng: &mut SimRng,
) -> Result<(ExternalParams, ExternalSource), FeasibilityError> {
    let coin: f64 = rng.random();
    if coin < p {
        if let Some(item) = archive.sample(rng) {
            return Ok((item.clone(), ExternalSource::Archive));
        }
    }
    Ok((valid.sample(rng)?, ExternalSource::Valid))
}

/// Task plus the seed of the episode that plays it.
#[derive(Clone, Debug, PartialEq)]
pub struct SeededTask {
    pub task: TaskParams,
    pub seed: u64,
}

/// Whatever owns the policy being trained.
pub trait Trainer {
    /// Train on a batch of tasks, returning one result per task in order.
    fn train_on(&mut self, tasks: &[SeededTask]) -> Result<Vec<EpisodeResult>, TrainerError>;

    /// Evaluate the current policy on each task without training.
    fn evaluate_policy(&mut self, tasks: &[SeededTask]) -> Result<Vec<EpisodeResult>, TrainerError>;
}

/// A fixed in-process policy standing in for a learner.
pub struct ScriptedTrainer {
    pub policy: PolicyConfig,
    pub engine: EngineConfig,
    pub workers: Option<usize>,
}

impl ScriptedTrainer {
    fn play(&self, tasks: &[SeededTask]) -> Result<Vec<EpisodeResult>, TrainerError> {
        let pairs: Vec<_> = tasks.iter().map(|t| (t.task.clone(), t.seed)).collect();
        Ok(run_tasks(&pairs, &self.policy, &self.engine, self.workers)?
            .into_iter()
            .map(|o| o.result)
            .collect())
    }
}

impl Trainer for ScriptedTrainer {
    fn train_on(&mut self, tasks: &[SeededTask]) -> Result<Vec<EpisodeResult>, TrainerError> {
        self.play(tasks)
    }

    fn evaluate_policy(&mut self, tasks: &[SeededTask]) -> Result<Vec<EpisodeResult>, TrainerError> {
        self.play(tasks)
    }
}

/// Stand-in for a policy that has learned nothing: every episode runs to
/// the horizon without a capture. Nothing is simulated.
pub struct NeverCaptureTrainer {
    pub horizon: usize,
}

impl NeverCaptureTrainer {
    fn fail(&self, tasks: &[SeededTask]) -> Vec<EpisodeResult> {
        tasks
            .iter()
            .map(|t| EpisodeResult {
                captured: false,
                capture_timestep: self.horizon,
                per_drone_return: vec![0.0; t.task.drone_count()],
                capture_return: 0.0,
                task: t.task.clone(),
                seed: t.seed,
            })
            .collect()
    }
}

impl Trainer for NeverCaptureTrainer {
    fn train_on(&mut self, tasks: &[SeededTask]) -> Result<Vec<EpisodeResult>, TrainerError> {
        Ok(self.fail(tasks))
    }

    fn evaluate_policy(&mut self, tasks: &[SeededTask]) -> Result<Vec<EpisodeResult>, TrainerError> {
        Ok(self.fail(tasks))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseEvaluation {
    pub captures: usize,
    pub episodes: usize,
    pub capture_rate: f64,
    pub passed: bool,
}

/// Gate: fraction of episodes with a positive capture return must reach `threshold`.
pub fn phase_passes(captures: usize, episodes: usize, threshold: f64) -> bool {
    episodes > 0 && captures as f64 / episodes as f64 >= threshold
}

fn build_tasks(
    externals: impl IntoIterator<Item = ExternalParams>,
    intrinsic: IntrinsicParams,
    cfg: &RandomizationConfig,
    rng: &mut SimRng,
) -> Vec<SeededTask> {
    externals
        .into_iter()
        .map(|external| SeededTask {
            task: TaskParams {
                intrinsic,
                external,
                arena: cfg.arena,
            },
            seed: rng.random(),
        })
        .collect()
}

fn expect_count(results: Vec<EpisodeResult>, expected: usize) -> Result<Vec<EpisodeResult>, TrainerError> {
    if results.len() == expected {
        Ok(results)
    } else {
        Err(TrainerError::ResultCount {
            expected,
            got: results.len(),
        })
    }
}

/// Evaluate the trainer's policy on fresh feasible layouts at `intrinsic`.
pub fn evaluate_phase(
    trainer: &mut dyn Trainer,
    intrinsic: IntrinsicParams,
    eval_episodes: usize,
    threshold: f64,
    valid: &TaskFilter,
    rng: &mut SimRng,
) -> Result<PhaseEvaluation, CurriculumError> {
    if eval_episodes == 0 {
        return Err(CurriculumError::Config("eval_episodes must be at least 1".into()));
    }
    let externals = (0..eval_episodes)
        .map(|_| valid.sample(rng))
        .collect::<Result<Vec<_>, _>>()?;
    let tasks = build_tasks(externals, intrinsic, &valid.config, rng);
    let results = expect_count(trainer.evaluate_policy(&tasks)?, eval_episodes)?;
    let captures = results.iter().filter(|r| r.capture_return > 0.0).count();
    Ok(PhaseEvaluation {
        captures,
        episodes: eval_episodes,
        capture_rate: captures as f64 / eval_episodes as f64,
        passed: phase_passes(captures, eval_episodes, threshold),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    /// Tasks per training batch.
    pub batch_size: usize,
    /// Probability of replaying an archived layout.
    pub archive_probability: f64,
    pub success_threshold: f64,
    pub eval_episodes: usize,
    pub archive_capacity: usize,
    /// Passed through to the attached learner; unused by the driver.
    pub discount: f64,
    pub intrinsic_enabled: bool,
    pub external_enabled: bool,
    pub parts: usize,
    /// First phase; defaults to (arena radius, 0).
    pub initial: Option<IntrinsicParams>,
    pub target: IntrinsicParams,
    pub max_iterations: usize,
    pub randomization: RandomizationConfig,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            archive_probability: 0.7,
            success_threshold: 0.98,
            eval_episodes: 1000,
            archive_capacity: 1024,
            discount: 0.99,
            intrinsic_enabled: true,
            external_enabled: true,
            parts: 10,
            initial: None,
            target: IntrinsicParams::target(),
            max_iterations: 1000,
            randomization: RandomizationConfig::default(),
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        let bad = |m: &str| Err(CurriculumError::Config(m.into()));
        if !(0.0..=1.0).contains(&self.archive_probability) {
            return bad("archive_probability must lie in [0, 1]");
        }
        if !(self.success_threshold > 0.0 && self.success_threshold <= 1.0) {
            return bad("success_threshold must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.eval_episodes == 0 {
            return bad("batch_size and eval_episodes must be positive");
        }
        self.randomization
            .validate()
            .map_err(|e| CurriculumError::Config(e.to_string()))
    }

    pub fn initial_params(&self) -> IntrinsicParams {
        self.initial
            .unwrap_or_else(|| IntrinsicParams::new(self.randomization.arena.radius, 0.0))
    }

    /// Phase list honoring the intrinsic ablation switch.
    pub fn phases(&self) -> Result<PhaseSequence, CurriculumError> {
        if self.intrinsic_enabled {
            get_order(self.initial_params(), self.target, self.parts)
        } else {
            Ok(PhaseSequence {
                phases: vec![self.target],
                current: 0,
            })
        }
    }

    fn effective_archive_probability(&self) -> f64 {
        if self.external_enabled {
            self.archive_probability
        } else {
            0.0
        }
    }
}

/// One line of the curriculum report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub phase: usize,
    pub capture_radius: f64,
    pub evader_speed: f64,
    pub batch_capture_rate: f64,
    pub archive_draws: usize,
    /// Archive size after adding this batch's failures.
    pub archive_size_after_update: usize,
    pub eval_capture_rate: f64,
    pub eval_passed: bool,
    pub advanced: bool,
    /// Archive size at the end of the iteration.
    pub archive_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumReport {
    pub phases: Vec<IntrinsicParams>,
    pub final_phase: usize,
    /// False when the iteration budget ran out before the last phase passed.
    pub completed: bool,
    pub iterations: Vec<IterationRecord>,
}

impl CurriculumReport {
    /// Line-delimited records followed by a summary line.
    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for rec in &self.iterations {
            serde_json::to_writer(&mut *out, rec)?;
            out.write_all(b"\n")?;
        }
        let summary = serde_json::json!({
            "summary": {
                "phases": self.phases.len(),
                "final_phase": self.final_phase,
                "completed": self.completed,
                "iterations": self.iterations.len(),
            }
        });
        serde_json::to_writer(&mut *out, &summary)?;
        out.write_all(b"\n")
    }
}

/// Run the curriculum loop until the last phase passes evaluation or the
/// iteration budget is spent. `on_iteration` sees each record as it is made.
pub fn run_dual_curriculum(
    trainer: &mut dyn Trainer,
    config: &CurriculumConfig,
    rng: &mut SimRng,
    mut on_iteration: impl FnMut(&IterationRecord),
) -> Result<CurriculumReport, CurriculumError> {
    config.validate()?;
    let mut phases = config.phases()?;
    let valid = TaskFilter::new(config.randomization.clone());
    let mut archive = ActiveArchive::new(config.archive_capacity);
    let p = config.effective_archive_probability();
    let mut records = Vec::new();
    let mut completed = false;

    for iteration in 0..config.max_iterations {
        let intrinsic = phases.current_params();
        let mut archive_draws = 0;
        let mut externals = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let (ext, source) = select_external(&archive, &valid, p, rng)?;
            archive_draws += (source == ExternalSource::Archive) as usize;
            externals.push(ext);
        }
        let batch = build_tasks(externals, intrinsic, &config.randomization, rng);
        let results = expect_count(trainer.train_on(&batch)?, batch.len())?;
        let batch_captures = results.iter().filter(|r| r.capture_return > 0.0).count();
        update_active_archive(&mut archive, &results, rng);
        let archive_size_after_update = archive.len();

        let eval = evaluate_phase(
            trainer,
            intrinsic,
            config.eval_episodes,
            config.success_threshold,
            &valid,
            rng,
        )?;
        let phase = phases.current;
        let mut advanced = false;
        if eval.passed {
            if phase == phases.last_index() {
                completed = true;
            } else {
                phases.advance();
                archive.clear();
                advanced = true;
            }
        }
        let record = IterationRecord {
            iteration,
            phase,
            capture_radius: intrinsic.capture_radius,
            evader_speed: intrinsic.evader_speed,
            batch_capture_rate: batch_captures as f64 / batch.len() as f64,
            archive_draws,
            archive_size_after_update,
            eval_capture_rate: eval.capture_rate,
            eval_passed: eval.passed,
            advanced,
            archive_size: archive.len(),
        };
        log::info!(
            "iteration {iteration}: phase {phase} d_c={:.3} v_e={:.3} batch={:.3} eval={:.3} archive={}",
            intrinsic.capture_radius,
            intrinsic.evader_speed,
            record.batch_capture_rate,
            eval.capture_rate,
            record.archive_size
        );
        on_iteration(&record);
        records.push(record);
        if completed {
            break;
        }
    }

    Ok(CurriculumReport {
        phases: phases.phases.clone(),
        final_phase: phases.current,
        completed,
        iterations: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::is_layout_feasible;
    use crate::world::seeded_rng;

    #[test]
    fn default_schedule() {
        let seq = get_order(IntrinsicParams::new(0.9, 0.0), IntrinsicParams::new(0.12, 2.4), 10).unwrap();
        assert_eq!(seq.len(), 21);
        let close = |a: IntrinsicParams, d: f64, v: f64| {
            (a.capture_radius - d).abs() < 1e-12 && (a.evader_speed - v).abs() < 1e-12
        };
        assert!(close(seq.phases[0], 0.9, 0.0));
        assert!(close(seq.phases[1], 0.9, 0.24));
        assert!(close(seq.phases[10], 0.9, 2.4));
        assert!(close(seq.phases[11], 0.822, 2.4));
        assert!(close(seq.phases[20], 0.12, 2.4));
        assert_eq!(seq.phases[20], IntrinsicParams::new(0.12, 2.4));
    }

    #[test]
    fn degenerate_and_inverted_intervals() {
        let p = IntrinsicParams::new(0.5, 1.0);
        assert_eq!(get_order(p, p, 10).unwrap().len(), 1);
        let seq = get_order(IntrinsicParams::new(0.9, 0.0), IntrinsicParams::new(0.9, 1.2), 10).unwrap();
        assert_eq!(seq.len(), 11);
        assert!((seq.phases[1].evader_speed - 0.12).abs() < 1e-12);
        assert!(get_order(IntrinsicParams::new(0.1, 0.0), IntrinsicParams::new(0.5, 1.0), 10).is_err());
        assert!(get_order(IntrinsicParams::new(0.9, 2.0), IntrinsicParams::new(0.5, 1.0), 10).is_err());
        assert!(get_order(p, p, 0).is_err());
    }

    #[test]
    fn monotone_schedule() {
        let seq = get_order(IntrinsicParams::new(0.9, 0.0), IntrinsicParams::target(), 7).unwrap();
        for w in seq.phases.windows(2) {
            assert!(w[1].evader_speed >= w[0].evader_speed);
            assert!(w[1].capture_radius <= w[0].capture_radius);
        }
    }

    #[test]
    fn phase_index_saturates() {
        let mut seq = get_order(IntrinsicParams::new(0.9, 0.0), IntrinsicParams::target(), 2).unwrap();
        for _ in 0..10 {
            seq.advance();
        }
        assert_eq!(seq.current, seq.last_index());
    }

    #[test]
    fn gate_threshold() {
        assert!(phase_passes(985, 1000, 0.98));
        assert!(phase_passes(980, 1000, 0.98));
        assert!(!phase_passes(979, 1000, 0.98));
        assert!(phase_passes(98, 100, 0.98));
        assert!(!phase_passes(0, 0, 0.98));
    }

    fn result(capture_return: f64, tag: f64) -> EpisodeResult {
        let mut task = crate::world::load_preset("empty").unwrap();
        task.external.evader_spawn.x = tag;
        EpisodeResult {
            captured: capture_return > 0.0,
            capture_timestep: if capture_return > 0.0 { 10 } else { 800 },
            per_drone_return: vec![],
            capture_return,
            task,
            seed: 0,
        }
    }

    #[test]
    fn archive_keeps_unsolved_layouts() {
        let mut rng = seeded_rng(0);
        let mut archive = ActiveArchive::new(8);
        update_active_archive(
            &mut archive,
            &[result(0.0, 0.1), result(10.0, 0.2), result(0.0, 0.3)],
            &mut rng,
        );
        assert_eq!(archive.len(), 2);
        assert_eq!(archive.items()[0].evader_spawn.x, 0.1);
        assert_eq!(archive.items()[1].evader_spawn.x, 0.3);
        update_active_archive(&mut archive, &[result(10.0, 0.4)], &mut rng);
        assert_eq!(archive.len(), 2);
    }

    #[test]
    fn full_archive_evicts_one() {
        let mut rng = seeded_rng(1);
        let mut archive = ActiveArchive::new(1024);
        for i in 0..1024 {
            update_active_archive(&mut archive, &[result(0.0, i as f64 * 1e-4)], &mut rng);
        }
        assert_eq!(archive.len(), 1024);
        update_active_archive(&mut archive, &[result(0.0, 0.5)], &mut rng);
        assert_eq!(archive.len(), 1024);
        assert!(archive.items().iter().any(|e| e.evader_spawn.x == 0.5));
    }

    #[test]
    fn selection_edge_cases() {
        let mut rng = seeded_rng(2);
        let valid = TaskFilter::new(RandomizationConfig::default());
        let empty = ActiveArchive::new(4);
        for _ in 0..50 {
            assert_eq!(
                select_external(&empty, &valid, 1.0, &mut rng).unwrap().1,
                ExternalSource::Valid
            );
        }
        let mut archive = ActiveArchive::new(4);
        archive.push(valid.sample(&mut rng).unwrap(), &mut rng);
        for _ in 0..50 {
            assert_eq!(
                select_external(&archive, &valid, 1.0, &mut rng).unwrap().1,
                ExternalSource::Archive
            );
            assert_eq!(
                select_external(&archive, &valid, 0.0, &mut rng).unwrap().1,
                ExternalSource::Valid
            );
        }
    }

    /// Records every task it is handed; captures on a fixed schedule.
    struct Recorder {
        seen: Vec<TaskParams>,
        capture: bool,
    }

    impl Trainer for Recorder {
        fn train_on(&mut self, tasks: &[SeededTask]) -> Result<Vec<EpisodeResult>, TrainerError> {
            self.seen.extend(tasks.iter().map(|t| t.task.clone()));
            self.evaluate_policy(tasks)
        }

        fn evaluate_policy(&mut self, tasks: &[SeededTask]) -> Result<Vec<EpisodeResult>, TrainerError> {
            Ok(tasks
                .iter()
                .map(|t| {
                    let mut r = result(if self.capture { 10.0 } else { 0.0 }, 0.0);
                    r.task = t.task.clone();
                    r
                })
                .collect())
        }
    }

    fn small_config() -> CurriculumConfig {
        CurriculumConfig {
            batch_size: 16,
            eval_episodes: 10,
            archive_capacity: 40,
            max_iterations: 12,
            parts: 2,
            ..Default::default()
        }
    }

    #[test]
    fn every_training_task_is_feasible() {
        let mut trainer = Recorder {
            seen: vec![],
            capture: false,
        };
        let cfg = small_config();
        run_dual_curriculum(&mut trainer, &cfg, &mut seeded_rng(3), |_| {}).unwrap();
        assert_eq!(trainer.seen.len(), 16 * 12);
        for t in &trainer.seen {
            assert!(is_layout_feasible(&t.external, &t.arena));
        }
    }

    #[test]
    fn external_ablation_never_consults_archive() {
        let mut trainer = Recorder {
            seen: vec![],
            capture: false,
        };
        let cfg = CurriculumConfig {
            external_enabled: false,
            ..small_config()
        };
        let report = run_dual_curriculum(&mut trainer, &cfg, &mut seeded_rng(4), |_| {}).unwrap();
        assert!(report.iterations.iter().all(|r| r.archive_draws == 0));
        assert!(report.iterations.last().unwrap().archive_size > 0);
    }

    #[test]
    fn always_capturing_trainer_walks_every_phase() {
        let mut trainer = Recorder {
            seen: vec![],
            capture: true,
        };
        let cfg = small_config();
        let mut streamed = 0;
        let report = run_dual_curriculum(&mut trainer, &cfg, &mut seeded_rng(5), |_| streamed += 1).unwrap();
        assert!(report.completed);
        assert_eq!(report.phases.len(), 5);
        assert_eq!(report.iterations.len(), 5);
        assert_eq!(streamed, 5);
        for (i, rec) in report.iterations.iter().enumerate() {
            assert_eq!(rec.phase, i);
            assert_eq!(rec.archive_size, 0);
        }
    }

    #[test]
    fn both_ablations_pin_the_target() {
        let mut trainer = Recorder {
            seen: vec![],
            capture: false,
        };
        let cfg = CurriculumConfig {
            external_enabled: false,
            intrinsic_enabled: false,
            ..small_config()
        };
        let report = run_dual_curriculum(&mut trainer, &cfg, &mut seeded_rng(6), |_| {}).unwrap();
        assert_eq!(report.phases, vec![IntrinsicParams::target()]);
        assert!(trainer.seen.iter().all(|t| t.intrinsic == IntrinsicParams::target()));
        assert!(report.iterations.iter().all(|r| r.archive_draws == 0));
        assert!(!report.completed);
    }

    #[test]
    fn report_serializes_one_line_per_iteration() {
        let mut trainer = NeverCaptureTrainer { horizon: 800 };
        let cfg = CurriculumConfig {
            max_iterations: 3,
            ..small_config()
        };
        let report = run_dual_curriculum(&mut trainer, &cfg, &mut seeded_rng(7), |_| {}).unwrap();
        let mut buf = Vec::new();
        report.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        let rec: IterationRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(rec, report.iterations[0]);
    }
}
