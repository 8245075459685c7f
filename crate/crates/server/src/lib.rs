//! Live teleoperation server.
//!
//! Three activities share one session: a UDP listener decoding pose
//! datagrams, a websocket bridge for the browser UI, and the fixed-rate tick
//! loop. Network tasks only send events over a channel; the tick loop owns
//! the [`Session`] and is the only code that mutates it. Each tick's state is
//! broadcast to every connected UI as JSON.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::net::{TcpListener, UdpSocket};
use tokio::sync::{broadcast, mpsc, watch};

use imu_teleop::imusim::sample_time;
use imu_teleop::teleop::autopilot::{Autopilot, AutopilotConfig};
use imu_teleop::teleop::bridge::{Action, ControlMessage, Outbound, SceneMessage, StateMessage};
use imu_teleop::teleop::datagram::DatagramIngest;
use imu_teleop::teleop::offline::InputFeed;
use imu_teleop::teleop::{
    Command, FinishedTrial, Input, InputSource, Session, SessionConfig, SessionState, TeleopError,
};

/// Largest UDP payload read; anything past the first 73 bytes is ignored.
const UDP_BUFFER: usize = 2048;
const EVENT_QUEUE: usize = 1024;
const BROADCAST_QUEUE: usize = 64;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("could not bind {what} on {addr}: {source}")]
    Bind {
        what: &'static str,
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Teleop(#[from] TeleopError),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub session: SessionConfig,
    /// Websocket bridge address; the UI connects to `/ws`.
    pub ws_addr: SocketAddr,
    /// Pose datagram listener, used with the datagram source.
    pub udp_addr: Option<SocketAddr>,
    /// Real-time autopilot driving the imusim source; restarted on every start.
    pub autopilot: Option<AutopilotConfig>,
}

/// Counters readable while the server runs.
#[derive(Debug, Default)]
pub struct Stats {
    pub ticks: AtomicU64,
    pub udp_accepted: AtomicU64,
    pub udp_out_of_order: AtomicU64,
    pub udp_malformed: AtomicU64,
    pub ui_clients: AtomicU64,
    pub ui_malformed: AtomicU64,
    pub inputs_rejected: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsSnapshot {
    pub ticks: u64,
    pub udp_accepted: u64,
    pub udp_out_of_order: u64,
    pub udp_malformed: u64,
    pub ui_clients: u64,
    pub ui_malformed: u64,
    pub inputs_rejected: u64,
}

impl Stats {
    pub fn snapshot(&self) -> StatsSnapshot {
        let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
        StatsSnapshot {
            ticks: get(&self.ticks),
            udp_accepted: get(&self.udp_accepted),
            udp_out_of_order: get(&self.udp_out_of_order),
            udp_malformed: get(&self.udp_malformed),
            ui_clients: get(&self.ui_clients),
            ui_malformed: get(&self.ui_malformed),
            inputs_rejected: get(&self.inputs_rejected),
        }
    }
}

/// What the tick loop hands back on shutdown.
#[derive(Debug, Clone)]
pub struct ServerOutcome {
    pub trials: Vec<FinishedTrial>,
    pub stats: StatsSnapshot,
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Input { input: Input, at: f64 },
    Command(Command),
}

/// Seconds since the server started; the single time base for inputs and ticks.
#[derive(Debug, Clone, Copy)]
struct Clock(Instant);

impl Clock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Clone)]
struct Bridge {
    scene: Arc<str>,
    states: broadcast::Sender<Arc<str>>,
    events: mpsc::Sender<Event>,
    stats: Arc<Stats>,
    clock: Clock,
    stop: watch::Receiver<bool>,
    /// UI inputs are only accepted when the session is driven from the UI.
    accepts_input: bool,
}

pub struct Server {
    config: ServerConfig,
    ws: TcpListener,
    udp: Option<UdpSocket>,
    stats: Arc<Stats>,
}

impl Server {
    pub async fn bind(config: ServerConfig) -> Result<Self, ServerError> {
        Session::new(config.session.clone())?;
        if let Some(ap) = config.autopilot {
            if config.session.source != InputSource::Imusim {
                return Err(TeleopError::InvalidConfig("autopilot needs the imusim source".into()).into());
            }
            Autopilot::new(&config.session, ap)?;
        }
        let ws = TcpListener::bind(config.ws_addr).await.map_err(|source| ServerError::Bind {
            what: "websocket",
            addr: config.ws_addr,
            source,
        })?;
        let udp = match config.udp_addr {
            Some(addr) => Some(UdpSocket::bind(addr).await.map_err(|source| ServerError::Bind {
                what: "udp",
                addr,
                source,
            })?),
            None => None,
        };
        Ok(Self {
            config,
            ws,
            udp,
            stats: Arc::default(),
        })
    }

    pub fn ws_addr(&self) -> std::io::Result<SocketAddr> {
        self.ws.local_addr()
    }

    pub fn udp_addr(&self) -> Option<std::io::Result<SocketAddr>> {
        self.udp.as_ref().map(UdpSocket::local_addr)
    }

    pub fn stats(&self) -> Arc<Stats> {
        self.stats.clone()
    }

    /// Serve until `shutdown` resolves.
    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<ServerOutcome, ServerError> {
        let clock = Clock(Instant::now());
        let (events_tx, events_rx) = mpsc::channel(EVENT_QUEUE);
        let (states_tx, _) = broadcast::channel(BROADCAST_QUEUE);
        let (stop_tx, stop_rx) = watch::channel(false);
        let session = &self.config.session;
        let scene = SceneMessage::new(&session.wire, session.trial.ring.inner_radius, session.trial.ring.outer_radius);
        let bridge = Bridge {
            scene: Outbound::Scene(scene).to_json().into(),
            states: states_tx.clone(),
            events: events_tx.clone(),
            stats: self.stats.clone(),
            clock,
            stop: stop_rx.clone(),
            accepts_input: session.source == InputSource::Ui,
        };

        let udp_task = self
            .udp
            .map(|sock| tokio::spawn(udp_loop(sock, events_tx.clone(), self.stats.clone(), clock, stop_rx.clone())));
        let router = Router::new().route("/ws", get(ws_upgrade)).with_state(bridge);
        let mut ws_stop = stop_rx.clone();
        let ws_task = tokio::spawn(async move {
            axum::serve(self.ws, router)
                .with_graceful_shutdown(async move {
                    stopped(&mut ws_stop).await;
                })
                .await
        });
        drop(events_tx);

        let tick = tick_loop(
            self.config.clone(),
            events_rx,
            states_tx,
            self.stats.clone(),
            clock,
            stop_rx,
        );
        let tick_task = tokio::spawn(tick);
        shutdown.await;
        let _ = stop_tx.send(true);

        let trials = tick_task.await.expect("tick loop does not panic")?;
        if let Some(t) = udp_task {
            t.await.expect("udp loop does not panic")?;
        }
        ws_task.await.expect("websocket server does not panic")?;
        Ok(ServerOutcome {
            trials,
            stats: self.stats.snapshot(),
        })
    }
}

async fn stopped(stop: &mut watch::Receiver<bool>) {
    let _ = stop.wait_for(|s| *s).await;
}

struct Pilot {
    feed: Autopilot,
    origin: f64,
    next: usize,
}

async fn tick_loop(
    config: ServerConfig,
    mut events: mpsc::Receiver<Event>,
    states: broadcast::Sender<Arc<str>>,
    stats: Arc<Stats>,
    clock: Clock,
    mut stop: watch::Receiver<bool>,
) -> Result<Vec<FinishedTrial>, ServerError> {
    let mut session = Session::new(config.session.clone())?;
    let mut pilot: Option<Pilot> = None;
    let mut trials = Vec::new();
    let period = Duration::from_secs_f64(1.0 / config.session.loop_rate_hz as f64);
    let mut interval = tokio::time::interval(period);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);

    loop {
        tokio::select! {
            _ = stopped(&mut stop) => break,
            Some(ev) = events.recv() => match ev {
                Event::Input { input, at } => {
                    if session.offer(input, at).is_err() {
                        stats.inputs_rejected.fetch_add(1, Ordering::Relaxed);
                    }
                }
                Event::Command(cmd) => {
                    if cmd == Command::Start && session.phase() != imu_teleop::teleop::Phase::Running {
                        if let Some(ap) = config.autopilot {
                            pilot = Some(Pilot {
                                feed: Autopilot::new(&config.session, ap)?,
                                origin: clock.now(),
                                next: 0,
                            });
                        }
                    }
                    session.command(cmd);
                }
            },
            _ = interval.tick() => {
                let now = clock.now();
                if let Some(p) = pilot.as_mut() {
                    let rate = p.feed.sensor_rate_hz();
                    while p.next < p.feed.len() && p.origin + sample_time(p.next, rate) <= now {
                        let (t, input) = p.feed.input(p.next)?;
                        p.next += 1;
                        session.offer(input, p.origin + t)?;
                    }
                }
                let state = session.tick(now)?.clone();
                if let Some(p) = pilot.as_mut() {
                    p.feed.observe(&SessionState { t: state.t - p.origin, ..state.clone() });
                }
                stats.ticks.fetch_add(1, Ordering::Relaxed);
                for trial in session.take_finished() {
                    if let Some(s) = trial.summary {
                        tracing::info!(
                            completed = s.completed,
                            time_s = s.completion_time,
                            pos_err_mm = s.mean_position_error_mm,
                            non_collision_pct = s.non_collision_pct,
                            "trial finished"
                        );
                    }
                    trials.push(trial);
                }
                let msg = Outbound::State(StateMessage::from(&state)).to_json();
                let _ = states.send(msg.into());
            }
        }
    }
    session.command(Command::Stop);
    trials.extend(session.take_finished());
    Ok(trials)
}

async fn udp_loop(
    sock: UdpSocket,
    events: mpsc::Sender<Event>,
    stats: Arc<Stats>,
    clock: Clock,
    mut stop: watch::Receiver<bool>,
) -> Result<(), ServerError> {
    let mut ingest = DatagramIngest::new();
    let mut buf = vec![0u8; UDP_BUFFER];
    loop {
        let n = tokio::select! {
            _ = stopped(&mut stop) => return Ok(()),
            r = sock.recv_from(&mut buf) => match r {
                Ok((n, _)) => n,
                Err(e) => {
                    tracing::warn!(error = %e, "udp receive failed");
                    continue;
                }
            },
        };
        let got = ingest.ingest(&buf[..n]);
        stats.udp_accepted.store(ingest.accepted, Ordering::Relaxed);
        stats.udp_out_of_order.store(ingest.out_of_order, Ordering::Relaxed);
        stats.udp_malformed.store(ingest.malformed, Ordering::Relaxed);
        if let Some(d) = got {
            let ev = Event::Input {
                input: Input::Pose { pose: d.pose() },
                at: clock.now(),
            };
            if events.send(ev).await.is_err() {
                return Ok(());
            }
        }
    }
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(bridge): State<Bridge>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| ui_client(socket, bridge))
}

async fn ui_client(socket: WebSocket, bridge: Bridge) {
    bridge.stats.ui_clients.fetch_add(1, Ordering::Relaxed);
    let (mut tx, mut rx) = socket.split();
    let mut states = bridge.states.subscribe();
    let mut stop = bridge.stop.clone();
    if tx.send(Message::Text(bridge.scene.as_ref().into())).await.is_err() {
        return;
    }
        loop {
        tokio::select! {
            _ = stopped(&mut stop) => {
                let _ = tx.send(Message::Close(None)).await;
                break;
            }
            state = states.recv() => match state {
                Ok(text) => {
                    if tx.send(Message::Text(text.as_ref().into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => break,
            },
            msg = rx.next() => match msg {
                Some(Ok(Message::Text(text))) => {
                    match ControlMessage::parse(text.as_str()).and_then(ControlMessage::into_action) {
                        Ok(action) => {
                            let ev = match action {
                                Action::Command(c) => Event::Command(c),
                                Action::Input(_) if !bridge.accepts_input => {
                                    bridge.stats.inputs_rejected.fetch_add(1, Ordering::Relaxed);
                                    continue;
                                }
                                Action::Input(input) => Event::Input { input, at: bridge.clock.now() },
                            };
                            if bridge.events.send(ev).await.is_err() {
                                break;
                            }
                        }
                        Err(e) => {
                            bridge.stats.ui_malformed.fetch_add(1, Ordering::Relaxed);
                            tracing::debug!(error = %e, "ignored UI message");
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    bridge.stats.ui_clients.fetch_sub(1, Ordering::Relaxed);
}
