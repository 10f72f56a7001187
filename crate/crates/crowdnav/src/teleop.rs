//! Teleoperation bridge: serves the simulator over a WebSocket so a person
//! can drive the robot and record demonstrations.
//!
//! Every frame is a JSON text message `{"v", "seq", "kind", "payload"}`;
//! see `docs/teleop_protocol.md` for the field-by-field schema.

use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender, TryRecvError};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tungstenite::{Message as WsMessage, WebSocket};

use crowdnav_core::demo::{DemoSource, Demonstration, Outcome};
use crowdnav_core::features::social_radii;
use crowdnav_core::geometry::Vec2;
use crowdnav_core::nav::{run_world, CommandSource, StepContext};
use crowdnav_core::reward_net::RewardModel;
use crowdnav_core::sim::{make_scenario, Scenario};

use crate::archive::{ArchiveHeader, ArchiveWriter, ARCHIVE_VERSION};
use crate::config::Config;

pub const PROTOCOL_VERSION: u32 = 1;

/// Commands buffered between the network and the tick; extra ones are
/// dropped, the tick only ever reads the latest.
const CONTROL_QUEUE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    pub seq: u64,
    #[serde(flatten)]
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Message {
    StateUpdate(StateUpdate),
    Command(CommandPayload),
    StartEpisode(StartEpisode),
    EndEpisode,
    EpisodeSaved(EpisodeSaved),
    Error(ErrorPayload),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandPayload {
    /// Forward velocity in the robot frame, m/s.
    pub vx: f64,
    /// Leftward velocity in the robot frame, m/s.
    pub vy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct StartEpisode {
    pub seed: Option<u64>,
    pub pedestrian_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedestrianView {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub social_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub episode: u64,
    pub tick: u64,
    pub time: f64,
    pub robot: Pose,
    pub goal: [f64; 2],
    pub waypoint: [f64; 2],
    /// Command that will be applied on this tick (after staleness decay).
    pub command: [f64; 2],
    pub pedestrians: Vec<PedestrianView>,
    /// Corners of the current grid window, counter-clockwise.
    pub window: [[f64; 2]; 4],
    pub cells_per_side: usize,
    /// Per-cell reward, `reward[row][col]`, when a model is loaded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSaved {
    pub episode: u64,
    pub outcome: Outcome,
    pub complete: bool,
    pub steps: usize,
    pub trajectory_length: f64,
    pub n_s: u64,
    pub svcr: f64,
    pub archive: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub message: String,
}

fn arr(v: Vec2) -> [f64; 2] {
    [v.x, v.y]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickMode {
    /// Ticks at `1/dt` Hz of wall-clock time regardless of input.
    Realtime,
    /// One tick per received command, for scripted replay.
    Lockstep,
}

/// Latest-wins command holder with staleness decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatestCommand {
    command: Vec2,
    stamp: Option<u64>,
}

impl Default for LatestCommand {
    fn default() -> Self {
        Self { command: Vec2::ZERO, stamp: None }
    }
}

impl LatestCommand {
    pub fn set(&mut self, command: Vec2, tick: u64) {
        self.command = command;
        self.stamp = Some(tick);
    }

    /// Command in force at `tick`; zero once older than `stale_ticks`.
    pub fn effective(&self, tick: u64, stale_ticks: u64) -> Vec2 {
        match self.stamp {
            Some(s) if tick.saturating_sub(s) <= stale_ticks => self.command,
            _ => Vec2::ZERO,
        }
    }
}

/// Network → simulation events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control {
    Command(Vec2),
    End,
    Disconnected,
}

/// Command source fed by the network flow.
pub struct BridgeSource {
    pub episode: u64,
    pub mode: TickMode,
    pub stale_ticks: u64,
    pub model: Option<RewardModel>,
    controls: Receiver<Control>,
    updates: SyncSender<Message>,
    latest: LatestCommand,
    tick: u64,
    next_deadline: Option<Instant>,
}

impl BridgeSource {
    pub fn new(episode: u64, mode: TickMode, stale_ticks: u64, controls: Receiver<Control>, updates: SyncSender<Message>) -> Self {
        Self {
            episode,
            mode,
            stale_ticks,
            model: None,
            controls,
            updates,
            latest: LatestCommand::default(),
            tick: 0,
            next_deadline: None,
        }
    }

    fn snapshot(&self, ctx: &StepContext<'_>, command: Vec2) -> StateUpdate {
        let world = ctx.world;
        let radii = social_radii(&world.pedestrians, &ctx.config.features.social);
        let w = &ctx.window.window;
        let m = w.cells_per_side;
        let reward = self.model.as_ref().and_then(|model| model.forward(&ctx.window.features).ok()).map(|r| r.chunks(m).map(<[f64]>::to_vec).collect());
        StateUpdate {
            episode: self.episode,
            tick: self.tick,
            time: world.clock.time(),
            robot: Pose { x: world.robot.position.x, y: world.robot.position.y, heading: world.robot.heading },
            goal: arr(world.robot_goal),
            waypoint: arr(ctx.waypoint),
            command: arr(command),
            pedestrians: world
                .pedestrians
                .iter()
                .zip(radii)
                .map(|(p, r)| PedestrianView {
                    id: p.id,
                    x: p.position.x,
                    y: p.position.y,
                    vx: p.linear_velocity.x,
                    vy: p.linear_velocity.y,
                    social_radius: r,
                })
                .collect(),
            window: w.outline().map(arr),
            cells_per_side: m,
            reward,
        }
    }
}

impl CommandSource for BridgeSource {
    fn next_command(&mut self, ctx: &StepContext<'_>) -> crowdnav_core::Result<Option<Vec2>> {
        let tick = self.tick;
        match self.mode {
            TickMode::Realtime => {
                let dt = Duration::from_secs_f64(ctx.config.sim.dt);
                let deadline = *self.next_deadline.get_or_insert_with(Instant::now);
                if let Some(wait) = deadline.checked_duration_since(Instant::now()) {
                    std::thread::sleep(wait);
                }
                self.next_deadline = Some(deadline + dt);
                loop {
                    match self.controls.try_recv() {
                        Ok(Control::Command(c)) => self.latest.set(c, tick),
                        Ok(Control::End) | Ok(Control::Disconnected) | Err(TryRecvError::Disconnected) => return Ok(None),
                        Err(TryRecvError::Empty) => break,
                    }
                }
            }
            TickMode::Lockstep => {
                let c = self.latest.effective(tick, self.stale_ticks);
                let _ = self.updates.send(Message::StateUpdate(self.snapshot(ctx, c)));
                match self.controls.recv() {
                    Ok(Control::Command(c)) => self.latest.set(c, tick),
                    _ => return Ok(None),
                }
            }
        }
        let command = self.latest.effective(tick, self.stale_ticks);
        if self.mode == TickMode::Realtime {
            // never block the tick on a slow client
            let _ = self.updates.try_send(Message::StateUpdate(self.snapshot(ctx, command)));
        }
        self.tick += 1;
        Ok(Some(command))
    }
}

#[derive(Debug, Clone)]
pub struct BridgeOptions {
    pub archive: PathBuf,
    pub mode: TickMode,
    /// Commands older than this decay to zero, s.
    pub stale_after: f64,
    pub model: Option<RewardModel>,
    /// Stop after this many client connections (`None` serves forever).
    pub max_sessions: Option<usize>,
}

struct Running {
    controls: SyncSender<Control>,
    handle: JoinHandle<anyhow::Result<Demonstration>>,
}

fn start_episode(
    request: &StartEpisode,
    config: &Config,
    options: &BridgeOptions,
    updates: SyncSender<Message>,
) -> anyhow::Result<Running> {
    let header = ArchiveHeader {
        version: ARCHIVE_VERSION,
        dt: config.sim.dt,
        scenario: config.scenario.clone(),
        config: config.runtime(),
    };
    let mut writer = ArchiveWriter::append(&options.archive, &header)?;
    let mut scenario: Scenario = config.scenario.clone();
    if let Some(seed) = request.seed {
        scenario.seed = seed;
    }
    if let Some(n) = request.pedestrian_count {
        scenario.pedestrian_count = n;
    }
    let runtime = config.runtime();
    let world = make_scenario(&scenario, &runtime.sim)?;
    let (controls_tx, controls_rx) = mpsc::sync_channel(CONTROL_QUEUE);
    let id = writer.next_id();
    let stale_ticks = (options.stale_after / runtime.sim.dt).round() as u64;
    let mut source = BridgeSource::new(id, options.mode, stale_ticks, controls_rx, updates.clone());
    source.model = options.model.clone();
    let archive = options.archive.display().to_string();
    let handle = std::thread::spawn(move || -> anyhow::Result<Demonstration> {
        let demo = run_world(world, &scenario, &mut source, DemoSource::Teleop, id, &runtime)?;
        writer.write(&demo)?;
        let _ = updates.send(Message::EpisodeSaved(EpisodeSaved {
            episode: demo.id,
            outcome: demo.outcome,
            complete: demo.complete,
            steps: demo.robot_states.len(),
            trajectory_length: demo.trajectory_length,
            n_s: demo.n_s,
            svcr: demo.svcr,
            archive,
        }));
        Ok(demo)
    });
    Ok(Running { controls: controls_tx, handle })
}

struct Session {
    socket: WebSocket<TcpStream>,
    out_seq: u64,
    in_seq: Option<u64>,
}

impl Session {
    fn send(&mut self, message: Message) -> tungstenite::Result<()> {
        self.out_seq += 1;
        let text = serde_json::to_string(&Envelope { v: PROTOCOL_VERSION, seq: self.out_seq, message }).expect("messages serialize");
        self.socket.send(WsMessage::Text(text))
    }

    fn error(&mut self, message: impl Into<String>) -> tungstenite::Result<()> {
        self.send(Message::Error(ErrorPayload { message: message.into() }))
    }
}

/// Serves one client connection until it disconnects. Returns the
/// demonstrations saved during the session.
pub fn serve_connection(stream: TcpStream, config: &Config, options: &BridgeOptions) -> anyhow::Result<Vec<Demonstration>> {
    stream.set_read_timeout(Some(Duration::from_millis(5)))?;
    stream.set_nodelay(true)?;
    let socket = tungstenite::accept(stream).map_err(|e| anyhow::anyhow!("websocket handshake: {e}"))?;
    let mut session = Session { socket, out_seq: 0, in_seq: None };
    let (updates_tx, updates_rx) = mpsc::sync_channel::<Message>(64);
    let mut running: Option<Running> = None;
    let mut saved = Vec::new();

    let finish = |running: &mut Option<Running>, saved: &mut Vec<Demonstration>| -> anyhow::Result<()> {
        if let Some(r) = running.take() {
            let demo = r.handle.join().map_err(|_| anyhow::anyhow!("episode thread panicked"))??;
            saved.push(demo);
        }
        Ok(())
    };

    loop {
        match session.socket.read() {
            Ok(WsMessage::Text(text)) => match serde_json::from_str::<Envelope>(&text) {
                Err(e) => session.error(format!("malformed message: {e}"))?,
                Ok(env) if env.v != PROTOCOL_VERSION => session.error(format!("unsupported protocol version {}", env.v))?,
                Ok(env) if session.in_seq.map_or(false, |s| env.seq <= s) => {
                    session.error(format!("sequence number {} is not increasing", env.seq))?
                }
                Ok(env) => {
                    session.in_seq = Some(env.seq);
                    match env.message {
                        Message::StartEpisode(req) => {
                            if running.as_ref().map_or(false, |r| !r.handle.is_finished()) {
                                session.error("an episode is already running")?;
                            } else {
                                finish(&mut running, &mut saved)?;
                                match start_episode(&req, config, options, updates_tx.clone()) {
                                    Ok(r) => running = Some(r),
                                    Err(e) => session.error(format!("cannot start episode: {e}"))?,
                                }
                            }
                        }
                        Message::Command(c) => match &running {
                            Some(r) if c.vx.is_finite() && c.vy.is_finite() => {
                                let _ = r.controls.try_send(Control::Command(Vec2::new(c.vx, c.vy)));
                            }
                            Some(_) => session.error("command must be finite")?,
                            None => session.error("no episode is running")?,
                        },
                        Message::EndEpisode => match &running {
                            Some(r) => {
                                let _ = r.controls.send(Control::End);
                            }
                            None => session.error("no episode is running")?,
                        },
                        _ => session.error("unexpected message kind from client")?,
                    }
                }
            },
            Ok(WsMessage::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
        loop {
            match updates_rx.try_recv() {
                Ok(m) => {
                    if session.send(m).is_err() {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
        if running.as_ref().map_or(false, |r| r.handle.is_finished()) {
            finish(&mut running, &mut saved)?;
            while let Ok(m) = updates_rx.try_recv() {
                session.send(m)?;
            }
        }
    }

    if let Some(r) = &running {
        let _ = r.controls.send(Control::Disconnected);
    }
    finish(&mut running, &mut saved)?;
    Ok(saved)
}

/// Accepts clients one at a time on `bind`.
pub fn serve(bind: impl ToSocketAddrs, config: &Config, options: &BridgeOptions, on_ready: impl FnOnce(std::net::SocketAddr)) -> anyhow::Result<Vec<Demonstration>> {
    let listener = TcpListener::bind(bind)?;
    on_ready(listener.local_addr()?);
    let mut saved = Vec::new();
    let mut sessions = 0;
    for stream in listener.incoming() {
        saved.extend(serve_connection(stream?, config, options)?);
        sessions += 1;
        if options.max_sessions.map_or(false, |m| sessions >= m) {
            break;
        }
    }
    Ok(saved)
}

/// Minimal scripted client: starts an episode, answers every state update
/// with the next command of `commands` (ending the episode when they run
/// out) and returns the server's `episode_saved` payload.
pub fn run_scripted_client(url: &str, start: StartEpisode, commands: &[Vec2], timeout: Duration) -> anyhow::Result<EpisodeSaved> {
    let (mut socket, _) = tungstenite::connect(url)?;
    if let tungstenite::stream::MaybeTlsStream::Plain(s) = socket.get_mut() {
        s.set_read_timeout(Some(Duration::from_millis(50)))?;
    }
    let mut seq = 0u64;
    let mut send = |socket: &mut WebSocket<_>, message: Message| -> anyhow::Result<()> {
        seq += 1;
        socket.send(WsMessage::Text(serde_json::to_string(&Envelope { v: PROTOCOL_VERSION, seq, message })?))?;
        Ok(())
    };
    send(&mut socket, Message::StartEpisode(start))?;
    let mut next = 0;
    let begin = Instant::now();
    loop {
        if begin.elapsed() > timeout {
            anyhow::bail!("timed out waiting for the server");
        }
        let text = match socket.read() {
            Ok(WsMessage::Text(t)) => t,
            Ok(_) => continue,
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => continue,
            Err(e) => return Err(e.into()),
        };
        let env: Envelope = serde_json::from_str(&text)?;
        match env.message {
            Message::StateUpdate(_) => {
                if let Some(c) = commands.get(next) {
                    send(&mut socket, Message::Command(CommandPayload { vx: c.x, vy: c.y }))?;
                    next += 1;
                } else if next == commands.len() {
                    send(&mut socket, Message::EndEpisode)?;
                    next += 1;
                }
            }
            Message::EpisodeSaved(saved) => {
                let _ = socket.close(None);
                return Ok(saved);
            }
            Message::Error(e) => anyhow::bail!("server error: {}", e.message),
            _ => {}
        }
    }
}

/// Receives with a deadline; used by tests driving a [`BridgeSource`].
pub fn recv_update(rx: &Receiver<Message>, timeout: Duration) -> Option<Message> {
    match rx.recv_timeout(timeout) {
        Ok(m) => Some(m),
        Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => None,
    }
}
