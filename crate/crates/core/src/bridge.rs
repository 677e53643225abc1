//! Line protocol that lets an external process act as the drone policy.
//!
//! Every message is one JSON object per line with a `type` tag. The server
//! drives the session:
//!
//! ```text
//! S hello{protocol_version, n, n_o_max, obs_len, max_speed, dt, horizon}
//! C hello{protocol_version}
//! per episode:
//!   S reset{task, seed, episode, mode}
//!   repeated: S obs{step, observations}  C act{commands}  S reward{rewards, captured, done}
//!   S result{result}
//! S bye{}
//! ```
//!
//! A malformed `act` gets an `error` naming the offending field and aborts
//! only the current episode; the next message is the following `reset`.
//! A version mismatch, a timeout waiting for `act`, or a dropped connection
//! ends the session.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::curriculum::{SeededTask, Trainer, TrainerError};
use crate::dynamics::DroneCommand;
use crate::episode::{
    aggregate_metrics, batch_task, episode_seed, run_episode, EngineConfig, EpisodeError, EpisodeResult, Metrics,
    SpawnMode,
};
use crate::policies::{build_observation, observation_len, Policy, PolicyError};
use crate::world::{TaskParams, WorldState};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_ACT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("bad endpoint `{0}`: expected `stdio` or host:port")]
    Endpoint(String),
    #[error("client speaks protocol {got}, server speaks {expected}")]
    Version { expected: u32, got: u32 },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeMode {
    Eval,
    Train,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerHello {
    pub protocol_version: u32,
    /// Drones per episode.
    pub n: usize,
    /// Obstacle slots per observation.
    pub n_o_max: usize,
    pub obs_len: usize,
    pub max_speed: f64,
    pub dt: f64,
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello(ServerHello),
    Reset {
        task: TaskParams,
        seed: u64,
        episode: u64,
        mode: EpisodeMode,
    },
    Obs {
        step: usize,
        observations: Vec<Vec<f64>>,
    },
    Reward {
        rewards: Vec<f64>,
        captured: bool,
        done: bool,
    },
    Result {
        result: EpisodeResult,
    },
    Error {
        message: String,
    },
    Bye,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello { protocol_version: u32 },
    Act { commands: Vec<DroneCommand> },
    Error { message: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Stdio,
    Tcp(String),
}

impl Endpoint {
    pub fn parse(s: &str) -> Result<Self, BridgeError> {
        match s {
            "stdio" | "-" => Ok(Endpoint::Stdio),
            _ => {
                let addr = s.strip_prefix("tcp://").unwrap_or(s);
                if addr
                    .rsplit_once(':')
                    .is_some_and(|(h, p)| !h.is_empty() && p.parse::<u16>().is_ok())
                {
                    Ok(Endpoint::Tcp(addr.to_string()))
                } else {
                    Err(BridgeError::Endpoint(s.to_string()))
                }
            }
        }
    }
}

/// Line-oriented duplex channel with a receive timeout. Lines are read on a
/// helper thread so a silent peer cannot block the server forever.
pub struct LineTransport {
    lines: Receiver<io::Result<String>>,
    writer: Box<dyn Write + Send>,
    timeout: Duration,
    transcript: Option<Box<dyn Write + Send>>,
    on_close: Option<Box<dyn FnOnce() + Send>>,
}

impl LineTransport {
    pub fn new<R, W>(reader: R, writer: W, timeout: Duration) -> Self
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in reader.lines() {
                let failed = line.is_err();
                if tx.send(line).is_err() || failed {
                    break;
                }
            }
        });
        Self {
            lines: rx,
            writer: Box::new(writer),
            timeout,
            transcript: None,
            on_close: None,
        }
    }

    pub fn tcp(stream: TcpStream, timeout: Duration) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        let handle = stream.try_clone()?;
        Ok(Self::new(reader, stream, timeout).on_close(move || {
            let _ = handle.shutdown(std::net::Shutdown::Both);
        }))
    }

    /// Run `f` when the transport is dropped. The reader thread keeps its
    /// half of the connection open, so sockets need an explicit shutdown
    /// for the peer to see end of stream.
    pub fn on_close(mut self, f: impl FnOnce() + Send + 'static) -> Self {
        self.on_close = Some(Box::new(f));
        self
    }

    /// Copy every line, prefixed `S ` (server) or `C ` (client), to `sink`.
    pub fn record_to(&mut self, sink: impl Write + Send + 'static) {
        self.transcript = Some(Box::new(sink));
    }

    fn note(&mut self, prefix: &str, line: &str) -> io::Result<()> {
        if let Some(t) = self.transcript.as_mut() {
            writeln!(t, "{prefix} {line}")?;
            t.flush()?;
        }
        Ok(())
    }

    pub fn send(&mut self, msg: &ServerMessage) -> Result<(), PolicyError> {
        let line = serde_json::to_string(msg).map_err(|e| PolicyError::Protocol(e.to_string()))?;
        self.note("S", &line)?;
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn recv_line(&mut self) -> Result<String, PolicyError> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => {
                self.note("C", &line)?;
                Ok(line)
            }
            Ok(Err(e)) => Err(PolicyError::Transport(e)),
            Err(RecvTimeoutError::Timeout) => Err(PolicyError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(PolicyError::Disconnected),
        }
    }
}

impl Drop for LineTransport {
    fn drop(&mut self) {
        if let Some(f) = self.on_close.take() {
            f();
        }
    }
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> PolicyError {
    PolicyError::InvalidCommand {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Parse a client reply that must be an `act` with `n` finite commands.
pub fn parse_act(line: &str, n: usize) -> Result<Vec<DroneCommand>, PolicyError> {
    let value: Value = serde_json::from_str(line).map_err(|e| invalid("<line>", e.to_string()))?;
    match value.get("type").and_then(Value::as_str) {
        Some("act") => {}
        Some("error") => {
            let message = value.get("message").and_then(Value::as_str).unwrap_or("");
            return Err(PolicyError::Protocol(format!("client gave up: {message}")));
        }
        Some(other) => return Err(invalid("type", format!("expected `act`, got `{other}`"))),
        None => return Err(invalid("type", "missing message tag")),
    }
    let raw = value
        .get("commands")
        .ok_or_else(|| invalid("commands", "missing"))?
        .as_array()
        .ok_or_else(|| invalid("commands", "expected an array"))?;
    if raw.len() != n {
        return Err(invalid("commands", format!("expected {n} entries, got {}", raw.len())));
    }
    raw.iter()
        .enumerate()
        .map(|(i, c)| {
            let cmd: DroneCommand =
                serde_json::from_value(c.clone()).map_err(|e| invalid(format!("commands[{i}]"), e.to_string()))?;
            let finite = match &cmd {
                DroneCommand::Velocity(v) => v.0.iter().all(|x| x.is_finite()),
                DroneCommand::ThrustRate(t) => t.thrust.is_finite() && t.body_rate.iter().all(|x| x.is_finite()),
            };
            if finite {
                Ok(cmd)
            } else {
                Err(invalid(format!("commands[{i}]"), "non-finite value"))
            }
        })
        .collect()
}

/// Policy whose actions come from the connected client.
struct RemotePolicy<'a> {
    transport: &'a mut LineTransport,
    n_o_max: usize,
    horizon: usize,
    episode: u64,
    mode: EpisodeMode,
    step: usize,
}

impl Policy for RemotePolicy<'_> {
    fn reset(&mut self, task: &TaskParams, seed: u64) -> Result<(), PolicyError> {
        self.step = 0;
        self.transport.send(&ServerMessage::Reset {
            task: task.clone(),
            seed,
            episode: self.episode,
            mode: self.mode,
        })
    }

    fn act(&mut self, world: &WorldState) -> Result<Vec<DroneCommand>, PolicyError> {
        let observations = (0..world.drones.len())
            .map(|i| build_observation(world, i, self.n_o_max, self.horizon))
            .collect();
        self.transport.send(&ServerMessage::Obs {
            step: self.step,
            observations,
        })?;
        let line = self.transport.recv_line()?;
        parse_act(&line, world.drones.len())
    }

    fn observe_reward(&mut self, rewards: &[f64], captured: bool, done: bool) -> Result<(), PolicyError> {
        self.step += 1;
        self.transport.send(&ServerMessage::Reward {
            rewards: rewards.to_vec(),
            captured,
            done,
        })
    }

    fn finish(&mut self, result: &EpisodeResult) -> Result<(), PolicyError> {
        self.transport.send(&ServerMessage::Result { result: result.clone() })
    }
}

/// Errors after which the session cannot continue.
fn is_fatal(e: &PolicyError) -> bool {
    matches!(
        e,
        PolicyError::Timeout(_) | PolicyError::Disconnected | PolicyError::Transport(_)
    )
}

/// Outcome of one episode played over the bridge.
#[derive(Debug)]
pub enum RemoteEpisode {
    Completed(EpisodeResult),
    /// The client's reply was rejected; the episode was dropped.
    Aborted {
        step: usize,
        reason: String,
    },
}

/// A connected, handshaken client.
pub struct BridgeSession {
    transport: LineTransport,
    hello: ServerHello,
    engine: EngineConfig,
    episodes: u64,
    closed: bool,
}

impl BridgeSession {
    pub fn hello_for(engine: &EngineConfig, n: usize, n_o_max: usize) -> ServerHello {
        ServerHello {
            protocol_version: PROTOCOL_VERSION,
            n,
            n_o_max,
            obs_len: observation_len(n, n_o_max),
            max_speed: engine.quad.max_speed,
            dt: engine.quad.dt,
            horizon: engine.episode.horizon,
        }
    }

    /// Send our hello and check the client's.
    pub fn handshake(
        mut transport: LineTransport,
        hello: ServerHello,
        engine: EngineConfig,
    ) -> Result<Self, BridgeError> {
        transport.send(&ServerMessage::Hello(hello.clone()))?;
        let line = transport.recv_line()?;
        let got = match serde_json::from_str::<ClientMessage>(&line) {
            Ok(ClientMessage::Hello { protocol_version }) => protocol_version,
            Ok(_) => {
                let err = PolicyError::Protocol("expected `hello`".into());
                let _ = transport.send(&ServerMessage::Error {
                    message: err.to_string(),
                });
                return Err(err.into());
            }
            Err(e) => {
                let err = PolicyError::Protocol(format!("malformed hello: {e}"));
                let _ = transport.send(&ServerMessage::Error {
                    message: err.to_string(),
                });
                return Err(err.into());
            }
        };
        if got != PROTOCOL_VERSION {
            let err = BridgeError::Version {
                expected: PROTOCOL_VERSION,
                got,
            };
            let _ = transport.send(&ServerMessage::Error {
                message: err.to_string(),
            });
            return Err(err);
        }
        Ok(Self {
            transport,
            hello,
            engine,
            episodes: 0,
            closed: false,
        })
    }

    pub fn hello(&self) -> &ServerHello {
        &self.hello
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Play one episode with the client as policy. Recoverable client
    /// mistakes abort the episode; transport failures close the session.
    pub fn play(&mut self, task: &TaskParams, seed: u64, mode: EpisodeMode) -> Result<RemoteEpisode, BridgeError> {
        if self.closed {
            return Err(PolicyError::Disconnected.into());
        }
        if task.drone_count() != self.hello.n {
            return Err(PolicyError::Protocol(format!(
                "task has {} drones but the session was opened for {}",
                task.drone_count(),
                self.hello.n
            ))
            .into());
        }
        let episode = self.episodes;
        self.episodes += 1;
        let mut policy = RemotePolicy {
            transport: &mut self.transport,
            n_o_max: self.hello.n_o_max,
            horizon: self.engine.episode.horizon,
            episode,
            mode,
            step: 0,
        };
        match run_episode(task, &mut policy, seed, &self.engine) {
            Ok(outcome) => Ok(RemoteEpisode::Completed(outcome.result)),
            Err(EpisodeError::Policy { step, source }) => {
                let message = format!("episode {episode} step {step}: {source}");
                log::warn!("{message}");
                let sent = self.transport.send(&ServerMessage::Error {
                    message: message.clone(),
                });
                if is_fatal(&source) || sent.is_err() {
                    self.closed = true;
                    return Err(source.into());
                }
                Ok(RemoteEpisode::Aborted { step, reason: message })
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Tell the client we are done.
    pub fn close(mut self) -> Result<(), BridgeError> {
        if !self.closed {
            self.transport.send(&ServerMessage::Bye)?;
        }
        Ok(())
    }
}

/// Work a `serve` instance performs for each client.
#[derive(Clone, Debug)]
pub struct BatchJob {
    pub template: TaskParams,
    pub spawns: SpawnMode,
    pub episodes: usize,
    pub run_seed: u64,
    pub n_o_max: usize,
}

#[derive(Debug)]
pub struct BatchReport {
    pub results: Vec<EpisodeResult>,
    pub aborted: usize,
    /// None when no episode completed.
    pub metrics: Option<Metrics>,
}

/// Play a whole evaluation batch against one client. Episode seeds and
/// tasks are exactly those of the in-process `run_batch`.
pub fn run_batch_session(session: &mut BridgeSession, job: &BatchJob) -> Result<BatchReport, BridgeError> {
    let mut results = Vec::with_capacity(job.episodes);
    let mut aborted = 0;
    for i in 0..job.episodes as u64 {
        let seed = episode_seed(job.run_seed, i);
        let task = batch_task(&job.template, job.spawns, seed)?;
        match session.play(&task, seed, EpisodeMode::Eval)? {
            RemoteEpisode::Completed(r) => results.push(r),
            RemoteEpisode::Aborted { .. } => aborted += 1,
        }
    }
    let metrics = aggregate_metrics(&results).ok();
    Ok(BatchReport {
        results,
        aborted,
        metrics,
    })
}

pub struct ServeOptions {
    pub engine: EngineConfig,
    pub act_timeout: Duration,
    /// Stop after the first client instead of waiting for the next.
    pub once: bool,
}

fn serve_one(transport: LineTransport, job: &BatchJob, opts: &ServeOptions) -> Result<BatchReport, BridgeError> {
    let hello = BridgeSession::hello_for(&opts.engine, job.template.drone_count(), job.n_o_max);
    let mut session = BridgeSession::handshake(transport, hello, opts.engine)?;
    let report = run_batch_session(&mut session, job)?;
    session.close()?;
    Ok(report)
}

/// Serve `job` to clients one at a time. `on_report` sees each finished
/// session; failed sessions are logged and do not stop the server.
pub fn serve(
    endpoint: &Endpoint,
    job: &BatchJob,
    opts: &ServeOptions,
    mut on_report: impl FnMut(&BatchReport),
) -> Result<(), BridgeError> {
    match endpoint {
        Endpoint::Stdio => {
            let transport = LineTransport::new(BufReader::new(io::stdin()), io::stdout(), opts.act_timeout);
            let report = serve_one(transport, job, opts)?;
            on_report(&report);
            Ok(())
        }
        Endpoint::Tcp(addr) => {
            let listener = TcpListener::bind(addr)?;
            log::info!("bridge listening on {}", listener.local_addr()?);
            for stream in listener.incoming() {
                let stream = stream?;
                match serve_one(LineTransport::tcp(stream, opts.act_timeout)?, job, opts) {
                    Ok(report) => on_report(&report),
                    Err(e) => log::warn!("session ended: {e}"),
                }
                if opts.once {
                    break;
                }
            }
            Ok(())
        }
    }
}

/// Accept a single client on `endpoint` and return its transport.
pub fn accept_one(endpoint: &Endpoint, timeout: Duration) -> Result<LineTransport, BridgeError> {
    match endpoint {
        Endpoint::Stdio => Ok(LineTransport::new(BufReader::new(io::stdin()), io::stdout(), timeout)),
        Endpoint::Tcp(addr) => {
            let listener = TcpListener::bind(addr)?;
            log::info!("waiting for trainer on {}", listener.local_addr()?);
            let (stream, peer) = listener.accept()?;
            log::info!("trainer connected from {peer}");
            Ok(LineTransport::tcp(stream, timeout)?)
        }
    }
}

/// Curriculum trainer backed by a bridge client. Training episodes are
/// announced with mode `train` so the client can learn from them. An episode
/// the client aborts counts as a failure to capture.
pub struct BridgeTrainer {
    pub session: BridgeSession,
}

impl BridgeTrainer {
    fn play_all(&mut self, tasks: &[SeededTask], mode: EpisodeMode) -> Result<Vec<EpisodeResult>, TrainerError> {
        let horizon = self.session.engine.episode.horizon;
        tasks
            .iter()
            .map(|t| match self.session.play(&t.task, t.seed, mode) {
                Ok(RemoteEpisode::Completed(r)) => Ok(r),
                Ok(RemoteEpisode::Aborted { .. }) => Ok(EpisodeResult {
                    captured: false,
                    capture_timestep: horizon,
                    per_drone_return: vec![0.0; t.task.drone_count()],
                    capture_return: 0.0,
                    task: t.task.clone(),
                    seed: t.seed,
                }),
                Err(e) => Err(TrainerError::Other(e.to_string())),
            })
            .collect()
    }
}

impl Trainer for BridgeTrainer {
    fn train_on(&mut self, tasks: &[SeededTask]) -> Result<Vec<EpisodeResult>, TrainerError> {
        self.play_all(tasks, EpisodeMode::Train)
    }

    fn evaluate_policy(&mut self, tasks: &[SeededTask]) -> Result<Vec<EpisodeResult>, TrainerError> {
        self.play_all(tasks, EpisodeMode::Eval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VelocityCommand;
    use crate::world::Vec3;

    #[test]
    fn endpoints() {
        assert_eq!(Endpoint::parse("stdio").unwrap(), Endpoint::Stdio);
        assert_eq!(
            Endpoint::parse("tcp://127.0.0.1:7000").unwrap(),
            Endpoint::Tcp("127.0.0.1:7000".into())
        );
        assert_eq!(
            Endpoint::parse("localhost:1").unwrap(),
            Endpoint::Tcp("localhost:1".into())
        );
        assert!(Endpoint::parse("nowhere").is_err());
        assert!(Endpoint::parse(":80").is_err());
    }

    #[test]
    fn act_parsing_reports_field_paths() {
        let ok = parse_act(r#"{"type":"act","commands":[{"velocity":[0.0,1.0,0.0]}]}"#, 1).unwrap();
        assert_eq!(ok, vec![DroneCommand::from(VelocityCommand(Vec3::new(0.0, 1.0, 0.0)))]);

        let path = |line: &str, n| match parse_act(line, n) {
            Err(PolicyError::InvalidCommand { path, .. }) => path,
            other => panic!("{other:?}"),
        };
        assert_eq!(path(r#"{"type":"act","commands":[]}"#, 2), "commands");
        assert_eq!(path(r#"{"type":"act"}"#, 2), "commands");
        assert_eq!(
            path(
                r#"{"type":"act","commands":[{"velocity":[0,0,0]},{"velocity":[0,0]}]}"#,
                2
            ),
            "commands[1]"
        );
        assert_eq!(path(r#"{"type":"hello","protocol_version":1}"#, 1), "type");
        assert_eq!(path("not json", 1), "<line>");
        assert!(matches!(
            parse_act(r#"{"type":"error","message":"bye"}"#, 1),
            Err(PolicyError::Protocol(_))
        ));
    }

    #[test]
    fn messages_use_type_tags() {
        let s = serde_json::to_string(&ServerMessage::Bye).unwrap();
        assert_eq!(s, r#"{"type":"bye"}"#);
        let m: ClientMessage = serde_json::from_str(r#"{"type":"hello","protocol_version":3}"#).unwrap();
        assert_eq!(m, ClientMessage::Hello { protocol_version: 3 });
    }

    #[test]
    fn silent_client_times_out() {
        let (_keep, rx) = std::os::unix::net::UnixStream::pair().unwrap();
        let reader = BufReader::new(rx.try_clone().unwrap());
        let mut t = LineTransport::new(reader, io::sink(), Duration::from_millis(50));
        assert!(matches!(t.recv_line(), Err(PolicyError::Timeout(_))));
    }

    #[test]
    fn closed_client_is_disconnected() {
        let mut t = LineTransport::new(io::empty(), io::sink(), Duration::from_secs(1));
        assert!(matches!(t.recv_line(), Err(PolicyError::Disconnected)));
    }
}
