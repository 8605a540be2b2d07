//! Live session: one simulation thread owns the world and estimator;
//! connections read the latest serialized frame and queue commands.

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, SyncSender, TrySendError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::anyhow;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::header;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::sync::{mpsc, watch};
use vi_core::geom::Point;
use vi_core::interface::{graph_digest, graph_document, load_scenario, parse_command, Command, Frame, LoadedScenario, ServerMessage};
use vi_core::sim::{SimEvent, Simulation, Steering, TickOutput};

use crate::Failure;

/// Frames are published at most this often.
const FRAME_PERIOD: Duration = Duration::from_millis(50);
const COMMAND_QUEUE: usize = 256;
const REPLY_QUEUE: usize = 32;

static INDEX_HTML: &str = include_str!("../ui/index.html");

pub struct Options {
    pub scenario: PathBuf,
    pub port: u16,
    pub bind: IpAddr,
    pub rate: f64,
    pub scripted: bool,
}

struct Envelope {
    command: Command,
    reply: mpsc::Sender<String>,
}

#[derive(Clone)]
struct AppState {
    frames: watch::Receiver<Arc<String>>,
    graph: watch::Receiver<Arc<String>>,
    commands: SyncSender<Envelope>,
}

fn error_message(message: impl Into<String>) -> String {
    serde_json::to_string(&ServerMessage::Error { message: message.into() }).expect("plain data")
}

/// Simulation-thread state.
struct Live {
    loaded: LoadedScenario,
    scripted: bool,
    sim: Simulation,
    last: TickOutput,
    v_hat: Vec<f64>,
    pending_events: Vec<String>,
    paused: bool,
    /// Added to the simulation tick so served ticks keep increasing across seed resets.
    tick_base: u64,
    last_served: Option<u64>,
    digest: String,
    next_label: usize,
}

fn new_simulation(loaded: &LoadedScenario, scripted: bool, seed: Option<u64>) -> Result<Simulation, Failure> {
    let mut loaded = loaded.clone();
    if !scripted {
        loaded.scenario.worker.script.clear();
    }
    if let Some(s) = seed {
        loaded.scenario.seed = s;
    }
    loaded.simulation().map_err(Failure::input)
}

fn initial_output(sim: &Simulation) -> TickOutput {
    TickOutput {
        tick: sim.tick_index(),
        t: sim.time(),
        true_pose: sim.worker().pose(),
        observed_pose: sim.observed_pose(),
        robots: sim.robot_snapshots(),
        goal_labels: sim.estimator().goal_labels(),
        update: None,
        probabilities: sim.estimator().probabilities().to_vec(),
        events: Vec::new(),
        latency: None,
        violations: 0,
    }
}

impl Live {
    fn new(loaded: LoadedScenario, scripted: bool) -> Result<Self, Failure> {
        let sim = new_simulation(&loaded, scripted, None)?;
        let digest = graph_digest(sim.estimator().graph());
        Ok(Self {
            last: initial_output(&sim),
            loaded,
            scripted,
            sim,
            v_hat: Vec::new(),
            pending_events: Vec::new(),
            paused: false,
            tick_base: 0,
            last_served: None,
            digest,
            next_label: 1,
        })
    }

    fn graph_json(&self) -> Arc<String> {
        let doc = graph_document(self.sim.world(), self.sim.estimator().graph());
        Arc::new(serde_json::to_string(&doc).expect("plain data"))
    }

    fn served_tick(&self) -> u64 {
        self.tick_base + self.sim.tick_index()
    }

    fn goals_changed(&mut self) {
        self.digest = graph_digest(self.sim.estimator().graph());
        if self.v_hat.len() != self.sim.estimator().goal_count() {
            self.v_hat.clear();
        }
    }

    fn fresh_label(&mut self) -> String {
        let labels = self.sim.estimator().goal_labels();
        loop {
            let l = format!("G{}", self.next_label);
            self.next_label += 1;
            if !labels.contains(&l) {
                return l;
            }
        }
    }

    /// Applies one command. Returns whether the goal set changed.
    fn apply(&mut self, command: &Command) -> Result<bool, String> {
        match *command {
            Command::Steer { heading, speed } => {
                self.sim.steer(Steering { heading, speed });
                Ok(false)
            }
            Command::AddGoal { x, y } => {
                let label = self.fresh_label();
                self.sim.add_goal_at(Point::new(x, y), &label).map_err(|e| e.to_string())?;
                self.pending_events.push(SimEvent::GoalAdded { goal: label }.tag());
                Ok(true)
            }
            Command::RemoveGoal { index } => {
                let labels = self.sim.estimator().goal_labels();
                let label = labels.get(index).cloned().ok_or_else(|| format!("no goal with index {index}"))?;
                self.sim.remove_goal(index).map_err(|e| e.to_string())?;
                self.pending_events.push(SimEvent::GoalRemoved { goal: label }.tag());
                Ok(true)
            }
            Command::Pause { paused } => {
                self.paused = paused.unwrap_or(!self.paused);
                Ok(false)
            }
            Command::SeedReset { seed } => {
                let sim = new_simulation(&self.loaded, self.scripted, seed).map_err(|f| match f {
                    Failure::Input(e) | Failure::Runtime(e) => e.to_string(),
                })?;
                self.tick_base = self.served_tick() + 1;
                self.sim = sim;
                self.last = initial_output(&self.sim);
                self.v_hat.clear();
                self.pending_events.push("seed_reset".into());
                self.last_served = None;
                Ok(true)
            }
        }
    }

    fn step(&mut self) {
        let out = self.sim.tick();
        if let Some(u) = &out.update {
            self.v_hat = u.v_hat.clone();
        }
        if out.events.iter().any(|e| matches!(e, SimEvent::GoalAdded { .. } | SimEvent::GoalRemoved { .. })) {
            self.goals_changed();
        }
        for e in &out.events {
            if e.is_error() {
                log::warn!("t={:.3}: {}", out.t, e.tag());
            }
        }
        self.pending_events.extend(out.events.iter().map(|e| e.tag()));
        self.last = out;
    }

    /// The frame to publish, when the served tick moved since the last one.
    fn frame(&mut self) -> Option<String> {
        let tick = self.served_tick();
        if self.last_served.is_some_and(|t| t >= tick) {
            return None;
        }
        self.last_served = Some(tick);
        let mut frame = Frame::of(&self.sim, &self.last, &self.v_hat, self.paused, &self.digest);
        frame.tick = tick;
        frame.events = std::mem::take(&mut self.pending_events);
        Some(serde_json::to_string(&ServerMessage::Frame(frame)).expect("plain data"))
    }
}

fn run_loop(
    mut live: Live,
    commands: Receiver<Envelope>,
    frames: watch::Sender<Arc<String>>,
    graph: watch::Sender<Arc<String>>,
    rate: f64,
    stop: Arc<AtomicBool>,
) {
    let period = Duration::from_secs_f64(live.sim.dt() / rate);
    let mut next_tick = Instant::now() + period;
    let mut last_frame: Option<Instant> = None;
    while !stop.load(Ordering::Relaxed) {
        let mut batch: Vec<Envelope> = Vec::new();
        while let Ok(env) = commands.try_recv() {
            batch.push(env);
        }
        let mut goals_changed = false;
        for (k, env) in batch.iter().enumerate() {
            // Repeats within one tick are applied once.
            if batch[..k].iter().any(|e| e.command == env.command) {
                continue;
            }
            match live.apply(&env.command) {
                Ok(changed) => goals_changed |= changed,
                Err(message) => {
                    let _ = env.reply.try_send(error_message(message));
                }
            }
        }
        if goals_changed {
            live.goals_changed();
        }

        let now = Instant::now();
        if !live.paused && now >= next_tick {
            live.step();
            next_tick += period;
            if now > next_tick + period * 10 {
                next_tick = now + period;
            }
            if live.last.events.iter().any(|e| matches!(e, SimEvent::GoalAdded { .. } | SimEvent::GoalRemoved { .. })) {
                goals_changed = true;
            }
        } else if live.paused {
            next_tick = now + period;
        }
        if goals_changed {
            graph.send_replace(live.graph_json());
        }
        if last_frame.is_none_or(|t| now.duration_since(t) >= FRAME_PERIOD) {
            if let Some(f) = live.frame() {
                frames.send_replace(Arc::new(f));
                last_frame = Some(now);
            }
        }
        let wake = next_tick.min(Instant::now() + Duration::from_millis(5));
        std::thread::sleep(wake.saturating_duration_since(Instant::now()));
    }
}

pub fn serve(opts: Options) -> Result<(), Failure> {
    if !(opts.rate > 0.0 && opts.rate.is_finite()) {
        return Err(Failure::Input(anyhow!("rate must be positive, got {}", opts.rate)));
    }
    let loaded = load_scenario(&opts.scenario).map_err(Failure::input)?;
    let mut live = Live::new(loaded, opts.scripted)?;
    let first = live.frame().expect("first frame");
    let (frames_tx, frames_rx) = watch::channel(Arc::new(first));
    let (graph_tx, graph_rx) = watch::channel(live.graph_json());
    let (cmd_tx, cmd_rx) = std::sync::mpsc::sync_channel(COMMAND_QUEUE);

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(Failure::runtime)?;
    let addr = SocketAddr::new(opts.bind, opts.port);
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind(addr))
        .map_err(|e| Failure::Runtime(anyhow!("cannot listen on {addr}: {e}")))?;
    let local = listener.local_addr().map_err(Failure::runtime)?;
    println!("listening on http://{local}");
    log::info!("serving {} on {local}", opts.scenario.display());

    let stop = Arc::new(AtomicBool::new(false));
    let sim_thread = {
        let stop = stop.clone();
        let rate = opts.rate;
        std::thread::Builder::new()
            .name("simulation".into())
            .spawn(move || run_loop(live, cmd_rx, frames_tx, graph_tx, rate, stop))
            .map_err(Failure::runtime)?
    };

    let state = AppState {
        frames: frames_rx,
        graph: graph_rx,
        commands: cmd_tx,
    };
    let app = Router::new()
        .route("/", get(|| async { Html(INDEX_HTML) }))
        .route("/index.html", get(|| async { Html(INDEX_HTML) }))
        .route("/graph", get(graph_handler))
        .route("/ws", get(ws_handler))
        .with_state(state);
    let served = runtime.block_on(async {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    });
    stop.store(true, Ordering::Relaxed);
    let _ = sim_thread.join();
    served.map_err(Failure::runtime)
}

async fn graph_handler(State(app): State<AppState>) -> Response {
    let doc = app.graph.borrow().clone();
    ([(header::CONTENT_TYPE, "application/json")], doc.as_str().to_owned()).into_response()
}

async fn ws_handler(ws: WebSocketUpgrade, State(app): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| session(socket, app))
}

async fn session(socket: WebSocket, app: AppState) {
    let (mut sink, mut stream) = socket.split();
    let (reply_tx, mut reply_rx) = mpsc::channel::<String>(REPLY_QUEUE);
    let mut frames = app.frames.clone();
    frames.mark_changed();
    loop {
        let outgoing = tokio::select! {
            changed = frames.changed() => match changed {
                Ok(()) => frames.borrow_and_update().as_str().to_owned(),
                Err(_) => break,
            },
            Some(reply) = reply_rx.recv() => reply,
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => match parse_command(&text) {
                    Ok(command) => match app.commands.try_send(Envelope { command, reply: reply_tx.clone() }) {
                        Ok(()) => continue,
                        Err(TrySendError::Full(_)) => error_message("command queue full"),
                        Err(TrySendError::Disconnected(_)) => break,
                    },
                    Err(message) => error_message(message),
                },
                Some(Ok(Message::Binary(_))) => error_message("commands are JSON text messages"),
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => continue,
            },
        };
        if sink.send(Message::Text(outgoing.into())).await.is_err() {
            break;
        }
    }
}
