use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pursuit_core::bridge::{self, BatchJob, BridgeSession, BridgeTrainer, Endpoint, ServeOptions};
use pursuit_core::curriculum::{run_dual_curriculum, CurriculumConfig, NeverCaptureTrainer, ScriptedTrainer, Trainer};
use pursuit_core::episode::{EngineConfig, SpawnMode};
use pursuit_core::evader::EvaderMode;
use pursuit_core::feasibility::{is_feasible, rasterize, spawn_cells, TaskFilter};
use pursuit_core::policies::{expand_grid, grid_search, ParameterGrid, PolicyConfig, PolicyFamily};
use pursuit_core::runner::{metrics_table, sweep, sweep_table, Evaluation, SweepAxis};
use pursuit_core::world::{
    resolve_scenario, save_scenario, seeded_rng, IntrinsicParams, RandomizationConfig, TaskParams, WorldError,
    DRONE_SIZE,
};

/// Multi-drone pursuit-evasion simulator.
///
/// Log verbosity is read from PURSUIT_LOG (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "pursuit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a policy on a scenario and write a metrics table.
    Sim(SimArgs),
    /// Evaluate a policy across values of one difficulty parameter.
    Sweep(SweepArgs),
    /// Run the dual curriculum with a scripted or remote trainer.
    Curriculum(CurriculumArgs),
    /// Check a scenario for drone-to-evader reachability, or sample feasible layouts.
    Filter(FilterArgs),
    /// Grid-search the hyperparameters of a heuristic policy.
    Gridsearch(GridArgs),
    /// Serve evaluation episodes to an external policy over the line protocol.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct EngineArgs {
    /// Override the scenario's capture radius (m).
    #[arg(long)]
    capture_radius: Option<f64>,
    /// Override the scenario's evader speed (m/s).
    #[arg(long)]
    evader_speed: Option<f64>,
    /// Drone speed limit (m/s).
    #[arg(long)]
    max_speed: Option<f64>,
    /// Steps per episode.
    #[arg(long)]
    horizon: Option<usize>,
    /// Evader velocity rule.
    #[arg(long, value_enum, default_value_t = EvaderArg::ConstantSpeed)]
    evader_mode: EvaderArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvaderArg {
    ConstantSpeed,
    RawSum,
}

impl EngineArgs {
    fn engine(&self) -> EngineConfig {
        let mut engine = EngineConfig::default();
        if let Some(v) = self.max_speed {
            engine.quad.max_speed = v;
        }
        if let Some(h) = self.horizon {
            engine.episode.horizon = h;
        }
        engine.evader_mode = match self.evader_mode {
            EvaderArg::ConstantSpeed => EvaderMode::ConstantSpeed,
            EvaderArg::RawSum => EvaderMode::RawSum,
        };
        engine
    }

    fn intrinsic(&self, base: IntrinsicParams) -> IntrinsicParams {
        IntrinsicParams::new(
            self.capture_radius.unwrap_or(base.capture_radius),
            self.evader_speed.unwrap_or(base.evader_speed),
        )
    }
}

#[derive(Args, Clone)]
struct EvalArgs {
    /// Preset name (empty, tower1, curve2, tower3, curve4, tower5) or scenario file.
    #[arg(long, default_value = "empty")]
    scenario: String,
    /// angelani (pure pursuit), janosov, apf or idle; or a JSON policy config file.
    #[arg(long, default_value = "apf")]
    policy: String,
    /// Episodes per seed.
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    /// Base seed; with --seeds k the seeds are seed..seed+k.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Use the scenario's spawn points instead of drawing fresh ones per episode.
    #[arg(long)]
    fixed_spawns: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long, env = "PURSUIT_WORKERS")]
    workers: Option<usize>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Metrics table destination (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-step logs of the first episodes here.
    #[arg(long)]
    trajectory_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    trajectory_count: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long, value_enum)]
    axis: AxisArg,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    CaptureRadius,
    EvaderSpeed,
}

#[derive(Args)]
struct CurriculumArgs {
    /// JSON curriculum config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scripted policy name, `never`, or `bridge`.
    #[arg(long, default_value = "janosov")]
    trainer: String,
    /// Endpoint to accept the trainer on when --trainer bridge.
    #[arg(long, default_value = "127.0.0.1:7000")]
    endpoint: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Drone speed limit for the scripted trainer (m/s).
    #[arg(long)]
    max_speed: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Pin the task difficulty at the target from the start.
    #[arg(long)]
    no_intrinsic: bool,
    /// Never replay archived layouts.
    #[arg(long)]
    no_external: bool,
    #[arg(long, env = "PURSUIT_WORKERS")]
    workers: Option<usize>,
    #[arg(long, default_value_t = 10)]
    timeout_secs: u64,
    /// Report destination (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    /// Scenario to check.
    #[arg(long, conflicts_with = "sample")]
    check: Option<String>,
    /// Number of feasible layouts to draw.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    max_obstacles: usize,
    #[arg(long, default_value_t = 4)]
    drones: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// janosov or apf.
    #[arg(long)]
    family: String,
    /// JSON object mapping parameter names to candidate values.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Inline grid entry `name=v1,v2,...`; repeatable.
    #[arg(long = "param")]
    params: Vec<String>,
    /// Comma-separated scenarios.
    #[arg(long, value_delimiter = ',', default_value = "tower3")]
    scenarios: Vec<String>,
    #[arg(long, default_value_t = 50)]
    episodes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, env = "PURSUIT_WORKERS")]
    workers: Option<usize>,
    #[command(flatten)]
    engine: EngineArgs,
    /// Score table destination; the winning config goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// host:port or stdio.
    #[arg(long, default_value = "127.0.0.1:7000")]
    endpoint: String,
    #[arg(long, default_value = "empty")]
    scenario: String,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    fixed_spawns: bool,
    /// Obstacle slots per observation.
    #[arg(long, default_value_t = 3)]
    max_obstacles: usize,
    #[arg(long, default_value_t = 10)]
    timeout_secs: u64,
    /// Exit after the first client.
    #[arg(long)]
    once: bool,
    /// Append each session's metrics here (default stderr).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<(), Failure>;

fn load_task(name: &str) -> Result<TaskParams, Failure> {
    resolve_scenario(name).map_err(|e| match e {
        WorldError::UnknownPreset(_) => Failure::usage(e.to_string()),
        other => other.into(),
    })
}

fn scenario_label(name: &str) -> String {
    Path::new(name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| name.to_string())
}

fn load_policy(name: &str) -> Result<PolicyConfig, Failure> {
    if let Some(cfg) = PolicyConfig::from_name(name) {
        return Ok(cfg);
    }
    if Path::new(name).is_file() {
        let cfg: PolicyConfig = serde_json::from_str(&fs::read_to_string(name)?)?;
        if matches!(cfg, PolicyConfig::External { .. }) {
            return Err(Failure::usage("external policies are served with `pursuit serve`"));
        }
        cfg.validate()?;
        return Ok(cfg);
    }
    Err(Failure::usage(format!(
        "unknown policy `{name}` (expected angelani, janosov, apf, idle or a config file)"
    )))
}

fn workers(flag: Option<usize>) -> usize {
    flag.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn write_output(path: Option<&Path>, text: &str) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn evaluation(args: &EvalArgs) -> Result<Evaluation, Failure> {
    let policy = load_policy(&args.policy)?;
    let base = load_task(&args.scenario)?;
    let task = base.with_intrinsic(args.engine.intrinsic(base.intrinsic));
    task.validate_for_simulation()?;
    if args.seeds == 0 {
        return Err(Failure::usage("--seeds must be at least 1"));
    }
    Ok(Evaluation {
        scenario: scenario_label(&args.scenario),
        task,
        policy,
        episodes: args.episodes,
        seeds: (0..args.seeds).map(|k| args.seed + k).collect(),
        spawns: if args.fixed_spawns {
            SpawnMode::Fixed
        } else {
            SpawnMode::Randomized
        },
        engine: args.engine.engine(),
        workers: Some(workers(args.workers)),
    })
}

fn cmd_sim(args: SimArgs) -> CliResult {
    let eval = evaluation(&args.eval)?;
    log::info!(
        "sim {} with {} for {} episodes x {} seeds",
        eval.scenario,
        eval.policy,
        eval.episodes,
        eval.seeds.len()
    );
    let row = eval.run()?;
    write_output(args.out.as_deref(), &metrics_table(&[row]))?;
    if let Some(dir) = &args.trajectory_dir {
        eval.write_trajectories(dir, args.trajectory_count)?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> CliResult {
    let eval = evaluation(&args.eval)?;
    let axis = match args.axis {
        AxisArg::CaptureRadius => SweepAxis::CaptureRadius,
        AxisArg::EvaderSpeed => SweepAxis::EvaderSpeed,
    };
    let rows = sweep(&eval, axis, &args.values)?;
    write_output(args.out.as_deref(), &sweep_table(axis, &rows))?;
    Ok(())
}

fn cmd_curriculum(args: CurriculumArgs) -> CliResult {
    let mut config: CurriculumConfig = match &args.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => CurriculumConfig::default(),
    };
    if let Some(v) = args.eval_episodes {
        config.eval_episodes = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.max_iterations {
        config.max_iterations = v;
    }
    config.intrinsic_enabled &= !args.no_intrinsic;
    config.external_enabled &= !args.no_external;
    config.validate()?;

    let mut engine = EngineConfig::default();
    if let Some(v) = args.max_speed {
        engine.quad.max_speed = v;
    }
    if let Some(h) = args.horizon {
        engine.episode.horizon = h;
    }

    let mut trainer: Box<dyn Trainer> = match args.trainer.as_str() {
        "never" => Box::new(NeverCaptureTrainer {
            horizon: engine.episode.horizon,
        }),
        "bridge" => {
            let endpoint = Endpoint::parse(&args.endpoint).map_err(|e| Failure::usage(e.to_string()))?;
            let transport = bridge::accept_one(&endpoint, Duration::from_secs(args.timeout_secs))?;
            let hello = BridgeSession::hello_for(
                &engine,
                config.randomization.drone_count,
                config.randomization.max_obstacles,
            );
            Box::new(BridgeTrainer {
                session: BridgeSession::handshake(transport, hello, engine)?,
            })
        }
        name => Box::new(ScriptedTrainer {
            policy: load_policy(name)?,
            engine,
            workers: Some(workers(args.workers)),
        }),
    };

    let mut rng = seeded_rng(args.seed);
    let report = run_dual_curriculum(trainer.as_mut(), &config, &mut rng, |_| {})?;
    let mut buf = Vec::new();
    report.write_jsonl(&mut buf)?;
    write_output(args.out.as_deref(), &String::from_utf8_lossy(&buf))?;
    log::info!(
        "curriculum finished at phase {} of {} after {} iterations (completed: {})",
        report.final_phase,
        report.phases.len() - 1,
        report.iterations.len(),
        report.completed
    );
    Ok(())
}

fn cmd_filter(args: FilterArgs) -> CliResult {
    if let Some(name) = &args.check {
        let task = load_task(name)?;
        let grid = rasterize(&task.external, &task.arena, DRONE_SIZE);
        let (verdict, picture) = match spawn_cells(&grid, &task.external) {
            Some((drones, evader)) => (
                is_feasible(&grid, &drones, evader),
                grid.render_with(&drones, Some(evader)),
            ),
            None => (false, grid.render()),
        };
        let text = format!("{}\n{picture}", if verdict { "feasible" } else { "infeasible" });
        write_output(args.out.as_deref(), &text)?;
        return Ok(());
    }
    let Some(count) = args.sample else {
        return Err(Failure::usage("filter needs --check <scenario> or --sample <count>"));
    };
    let filter = TaskFilter::new(RandomizationConfig {
        drone_count: args.drones,
        max_obstacles: args.max_obstacles,
        ..Default::default()
    });
    filter.config.validate()?;
    let mut rng = seeded_rng(args.seed);
    let mut text = String::new();
    for _ in 0..count {
        let task = TaskParams {
            intrinsic: IntrinsicParams::target(),
            external: filter.sample(&mut rng)?,
            arena: filter.config.arena,
        };
        let doc: serde_json::Value = serde_json::from_str(&save_scenario(&task))?;
        text.push_str(&serde_json::to_string(&doc)?);
        text.push('\n');
    }
    write_output(args.out.as_deref(), &text)?;
    Ok(())
}

fn parse_param(spec: &str) -> Result<(String, Vec<f64>), Failure> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| Failure::usage(format!("--param `{spec}` is not name=v1,v2,...")))?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::usage(format!("--param `{spec}`: {e}")))?;
    Ok((name.trim().to_string(), values))
}

fn cmd_gridsearch(args: GridArgs) -> CliResult {
    let family = PolicyFamily::parse(&args.family).ok_or_else(|| {
        Failure::usage(format!(
            "unknown policy family `{}` (expected janosov or apf)",
            args.family
        ))
    })?;
    let mut grid: ParameterGrid = match &args.grid {
        Some(p) => serde_json::from_str::<BTreeMap<String, Vec<f64>>>(&fs::read_to_string(p)?)?,
        None => ParameterGrid::new(),
    };
    for spec in &args.params {
        let (name, values) = parse_param(spec)?;
        grid.insert(name, values);
    }
    let cells = expand_grid(family, &grid)?;
    let tasks = args
        .scenarios
        .iter()
        .map(|s| {
            let base = load_task(s)?;
            Ok(base.with_intrinsic(args.engine.intrinsic(base.intrinsic)))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let result = grid_search(
        &cells,
        &tasks,
        args.episodes,
        args.seed,
        &args.engine.engine(),
        Some(workers(args.workers)),
    )?;
    let mut table = String::from("cell,config,capture_rate,capture_timestep_mean,episodes\n");
    for (i, cell) in result.table.iter().enumerate() {
        let cfg = serde_json::to_string(&cell.config)?.replace('"', "\"\"");
        table.push_str(&format!(
            "{i},\"{cfg}\",{},{},{}\n",
            cell.metrics.capture_rate, cell.metrics.mean_capture_timestep, cell.metrics.episode_count
        ));
    }
    if let Some(out) = &args.out {
        fs::write(out, table)?;
    } else {
        eprint!("{table}");
    }
    println!("{}", serde_json::to_string(&result.best)?);
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> CliResult {
    let endpoint = Endpoint::parse(&args.endpoint).map_err(|e| Failure::usage(e.to_string()))?;
    let base = load_task(&args.scenario)?;
    let template = base.with_intrinsic(args.engine.intrinsic(base.intrinsic));
    template.validate_for_simulation()?;
    let job = BatchJob {
        template,
        spawns: if args.fixed_spawns {
            SpawnMode::Fixed
        } else {
            SpawnMode::Randomized
        },
        episodes: args.episodes,
        run_seed: args.seed,
        n_o_max: args.max_obstacles,
    };
    let opts = ServeOptions {
        engine: args.engine.engine(),
        act_timeout: Duration::from_secs(args.timeout_secs),
        once: args.once,
    };
    let label = scenario_label(&args.scenario);
    let mut sink_err = None;
    bridge::serve(&endpoint, &job, &opts, |report| {
        let line = match &report.metrics {
            Some(m) => format!(
                "{label},external,{},{},{},{}\n",
                m.capture_rate, m.mean_capture_timestep, m.episode_count, report.aborted
            ),
            None => format!("{label},external,,,0,{}\n", report.aborted),
        };
        let written = match &args.out {
            Some(p) => fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .and_then(|mut f| f.write_all(line.as_bytes())),
            None => io::stderr().write_all(line.as_bytes()),
        };
        if let Err(e) = written {
            sink_err = Some(e);
        }
    })?;
    match sink_err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PURSUIT_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sim(a) => cmd_sim(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Curriculum(a) => cmd_curriculum(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Gridsearch(a) => cmd_gridsearch(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
