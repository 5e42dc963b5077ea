//! WebSocket teleoperation: state and images out, steering and demo
//! recording in.
//!
//! Socket `/teleop`. Server to client:
//! - text: JSON state, `{"type":"state", ...}` at `state_hz`, plus
//!   `{"type":"demo", ...}` after each saved demo and `{"type":"warning"}`
//!   for ignored requests.
//! - binary: first byte is the kind. `1` composite: `seq u64, w u32, h u32`
//!   then `w*h*3` rgb bytes. `2` costmap: the bridge occupancy encoding.
//!   All integers little endian. Sent only when a new frame arrives.
//!
//! Client to server (text JSON):
//! - `{"type":"steer","seq":n,"deg":d}`: `d` clamped to [-90, 90]; a `seq`
//!   at or below the last one seen on the connection is dropped.
//! - `{"type":"record","action":"start"|"stop"}`
//! - `{"type":"reset"}`: restarts the robot at the scenario start.
//!
//! The robot stops while no fresh steering arrives.

use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use glam::DVec2;
use serde::{Deserialize, Serialize};

use emberlink::bc::{save_demo, steering_heading, task_axis, Demo, DemoSample};
use emberlink::bridge::{Payload, Topic};
use emberlink::cosim::{fire_clearance, ControlInput, Controller};
use emberlink::costmap::to_occupancy_message;
use emberlink::reactive::ReactiveConfig;
use emberlink::realtime::{Realtime, RealtimeConfig};
use emberlink::robot::{Command, RobotState};
use emberlink::scenario::{FireSide, Scenario};

#[derive(Debug, Clone)]
pub struct TeleopConfig {
    pub scenario: Scenario,
    pub demos: PathBuf,
    pub static_dir: Option<PathBuf>,
    /// s of fire before the robot starts.
    pub warmup: f64,
    pub seed: u64,
    pub state_hz: f64,
    pub record_hz: f64,
    /// m
    pub goal_tolerance: f64,
    /// Longest session before the robot loop ends on its own, s.
    pub session_s: f64,
    pub camera: bool,
}

impl TeleopConfig {
    pub fn new(scenario: Scenario) -> Self {
        TeleopConfig {
            scenario,
            demos: PathBuf::from("demos"),
            static_dir: None,
            warmup: 2.0,
            seed: 7,
            state_hz: 20.0,
            record_hz: 20.0,
            goal_tolerance: 0.5,
            session_s: 3600.0,
            camera: true,
        }
    }
}

/// Drives at the robot speed in the steered direction, body along the
/// task axis; stops without fresh steering.
pub struct TeleopDrive {
    pub axis: DVec2,
    pub speed: f64,
}

impl Controller for TeleopDrive {
    fn command(&mut self, input: &ControlInput) -> Command {
        match input.steering {
            Some(deg) => {
                let dir = DVec2::from_angle(steering_heading(self.axis, deg.clamp(-90.0, 90.0)));
                Command::Velocity {
                    vx: self.speed * dir.x,
                    vy: self.speed * dir.y,
                }
            }
            None => Command::Stop,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMsg {
    Steer { seq: u64, deg: f64 },
    Record { action: RecordAction },
    Reset,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum RecordAction {
    Start,
    Stop,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Odom {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub stamp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FireMark {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DemoResult {
    pub name: String,
    pub file: String,
    pub valid: bool,
    pub samples: usize,
    /// Why an invalid demo was rejected.
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMsg {
    State {
        seq: u64,
        /// Robot-clock seconds.
        stamp: f64,
        odom: Option<Odom>,
        /// Odometry older than its budget, or none yet.
        stale: bool,
        thermal_stale: bool,
        goal: [f64; 2],
        start: [f64; 2],
        fires: Vec<FireMark>,
        steering: f64,
        recording: bool,
        demos: usize,
        last_demo: Option<DemoResult>,
        /// Robot loop ended (goal reached or session over); reset to
        /// drive again.
        finished: bool,
        session: u64,
    },
    Demo(DemoResult),
    Warning {
        message: String,
    },
}

pub const FRAME_COMPOSITE: u8 = 1;
pub const FRAME_COSTMAP: u8 = 2;

struct Recording {
    owner: u64,
    started: f64,
    next: f64,
    samples: Vec<DemoSample>,
    min_clearance: f64,
}

#[derive(Default)]
struct Recorder {
    active: Option<Recording>,
    count: usize,
    last: Option<DemoResult>,
}

struct Shared {
    cfg: TeleopConfig,
    side: FireSide,
    session: Mutex<Option<Realtime>>,
    session_id: Mutex<u64>,
    recorder: Mutex<Recorder>,
    /// Serializes steering publishes so stamps never regress.
    steer: Mutex<()>,
    next_client: Mutex<u64>,
}

/// Which side of the start-goal axis the first fire is on.
pub fn fire_side(sc: &Scenario) -> FireSide {
    let (o, axis) = task_axis(sc);
    let f = sc
        .fires
        .first()
        .map_or(o, |f| DVec2::new(f.center[0], f.center[1]));
    if axis.perp_dot(f - o) >= 0.0 {
        FireSide::Left
    } else {
        FireSide::Right
    }
}

fn existing_demos(dir: &Path) -> usize {
    std::fs::read_dir(dir).map_or(0, |r| {
        r.filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".csv"))
            .count()
    })
}

fn start_session(cfg: &TeleopConfig) -> anyhow::Result<Realtime> {
    let rt_cfg = RealtimeConfig {
        warmup: cfg.warmup,
        seed: cfg.seed,
        goal_tolerance: Some(cfg.goal_tolerance),
        camera_loop: cfg.camera,
        ..RealtimeConfig::new(cfg.session_s)
    };
    let drive = TeleopDrive {
        axis: task_axis(&cfg.scenario).1,
        speed: cfg.scenario.robot.speed,
    };
    Ok(Realtime::start(&cfg.scenario, &rt_cfg, Box::new(drive))?)
}

impl Shared {
    fn with_session<T>(&self, f: impl FnOnce(&Realtime) -> T) -> Option<T> {
        self.session.lock().unwrap().as_ref().map(f)
    }

    fn odom(&self) -> Option<(RobotState, bool, f64)> {
        self.with_session(|rt| {
            let now = rt.robot_clock.now();
            rt.robot_bus
                .latest(Topic::RobotOdom, now)
                .and_then(|l| match l.envelope.payload {
                    Payload::Odom(s) => Some((s, l.stale, now)),
                    _ => None,
                })
        })
        .flatten()
    }

    fn steering_now(&self) -> f64 {
        self.with_session(|rt| {
            let now = rt.robot_clock.now();
            rt.robot_bus
                .latest(Topic::TeleopSteering, now)
                .filter(|l| !l.stale)
                .and_then(|l| match l.envelope.payload {
                    Payload::Steering(d) => Some(d),
                    _ => None,
                })
        })
        .flatten()
        .unwrap_or(0.0)
    }

    fn publish_steering(&self, deg: f64) {
        let _g = self.steer.lock().unwrap();
        self.with_session(|rt| {
            let now = rt.robot_clock.now();
            if let Err(e) = rt.robot_bus.publish(
                Topic::TeleopSteering,
                Payload::Steering(deg.clamp(-90.0, 90.0)),
                now,
            ) {
                log::warn!("steering dropped: {e}");
            }
        });
    }

    fn finished(&self) -> bool {
        self.with_session(|rt| rt.robot_finished()).unwrap_or(true)
    }

    fn start_recording(&self, owner: u64) -> Result<(), String> {
        let now = self.odom().map(|o| o.2).ok_or("no robot session")?;
        let mut rec = self.recorder.lock().unwrap();
        if rec.active.is_some() {
            return Err("already recording".into());
        }
        rec.active = Some(Recording {
            owner,
            started: now,
            next: now,
            samples: Vec::new(),
            min_clearance: f64::INFINITY,
        });
        Ok(())
    }

    /// Ends the active recording and writes it; `reason` marks it invalid.
    fn stop_recording(&self, reason: Option<&str>) -> Option<anyhow::Result<DemoResult>> {
        let mut rec = self.recorder.lock().unwrap();
        let r = rec.active.take()?;
        let reached = r
            .samples
            .last()
            .is_some_and(|s| DVec2::new(s.dx, s.dy).length() <= self.cfg.goal_tolerance);
        let reason = match reason {
            Some(why) => Some(why.to_string()),
            None if r.samples.is_empty() => Some("no samples".into()),
            None if r.min_clearance < 0.0 => Some("entered the fire".into()),
            None if !reached => Some("stopped before the goal".into()),
            None => None,
        };
        let k = existing_demos(&self.cfg.demos);
        let name = format!("demo_{k:02}_{}", self.side.as_str());
        let demo = Demo {
            name: name.clone(),
            side: self.side,
            valid: reason.is_none(),
            samples: r.samples,
            min_clearance: r.min_clearance,
        };
        let out = save_demo(&self.cfg.demos, &demo).map(|path| {
            let res = DemoResult {
                name,
                file: path.file_name().unwrap().to_string_lossy().into_owned(),
                valid: demo.valid,
                samples: demo.samples.len(),
                reason,
            };
            rec.count += 1;
            rec.last = Some(res.clone());
            res
        });
        Some(out.map_err(anyhow::Error::from))
    }

    /// One recording tick: appends a sample when one is due and stops the
    /// recording at the goal.
    fn record_tick(&self) -> Option<anyhow::Result<DemoResult>> {
        let (state, _, now) = self.odom()?;
        let readings = self
            .with_session(|rt| {
                rt.robot_bus
                    .latest(Topic::SensorsThermal, now)
                    .and_then(|l| match &l.envelope.payload {
                        Payload::Thermal(r) => Some(r.clone()),
                        _ => None,
                    })
            })
            .flatten();
        let steering = self.steering_now();
        let sc = &self.cfg.scenario;
        let done = {
            let mut rec = self.recorder.lock().unwrap();
            let r = rec.active.as_mut()?;
            if now + 1e-9 < r.next {
                return None;
            }
            r.next += 1.0 / self.cfg.record_hz;
            if r.next < now {
                r.next = now + 1.0 / self.cfg.record_hz;
            }
            let q = readings
                .as_deref()
                .map_or([0.0; 4], |rs| ReactiveConfig::default().pick(rs));
            let d = sc.goal() - state.position();
            r.samples.push(DemoSample {
                stamp: now - r.started,
                q,
                dx: d.x,
                dy: d.y,
                steering,
                side: self.side,
            });
            r.min_clearance = r.min_clearance.min(fire_clearance(sc, state.position()));
            d.length() <= self.cfg.goal_tolerance
        };
        done.then(|| self.stop_recording(None)).flatten()
    }

    fn state(&self, seq: u64) -> ServerMsg {
        let sc = &self.cfg.scenario;
        let odom = self.odom();
        let (stamp, thermal_stale) = self
            .with_session(|rt| {
                let now = rt.robot_clock.now();
                (
                    now,
                    rt.robot_bus
                        .latest(Topic::SensorsThermal, now)
                        .is_none_or(|l| l.stale),
                )
            })
            .unwrap_or((0.0, true));
        let rec = self.recorder.lock().unwrap();
        ServerMsg::State {
            seq,
            stamp,
            stale: odom.as_ref().is_none_or(|o| o.1),
            odom: odom.map(|(s, _, _)| Odom {
                x: s.x,
                y: s.y,
                heading: s.heading,
                stamp: s.stamp,
            }),
            thermal_stale,
            goal: sc.robot_goal,
            start: sc.robot_start,
            fires: sc
                .fires
                .iter()
                .map(|f| FireMark {
                    x: f.center[0],
                    y: f.center[1],
                    radius: f.radius,
                })
                .collect(),
            steering: self.steering_now(),
            recording: rec.active.is_some(),
            demos: rec.count,
            last_demo: rec.last.clone(),
            finished: self.finished(),
            session: *self.session_id.lock().unwrap(),
        }
    }

    /// Binary frames newer than `seen` (composite seq, costmap seq).
    fn frames(&self, seen: &mut (u64, u64)) -> Vec<Vec<u8>> {
        self.with_session(|rt| {
            let now = rt.robot_clock.now();
            let mut out = Vec::new();
            if let Some(l) = rt.robot_bus.latest(Topic::CameraComposite, now) {
                if let (true, Payload::Composite(c)) =
                    (l.envelope.seq > seen.0, &l.envelope.payload)
                {
                    seen.0 = l.envelope.seq;
                    let mut b = vec![FRAME_COMPOSITE];
                    b.extend_from_slice(&c.source_seq.to_le_bytes());
                    b.extend_from_slice(&c.image.width.to_le_bytes());
                    b.extend_from_slice(&c.image.height.to_le_bytes());
                    b.extend_from_slice(&c.image.data);
                    out.push(b);
                }
            }
            if let Some(l) = rt.robot_bus.latest(Topic::CostmapThermal, now) {
                if let (true, Payload::Costmap(m)) = (l.envelope.seq > seen.1, &l.envelope.payload)
                {
                    seen.1 = l.envelope.seq;
                    let mut b = vec![FRAME_COSTMAP];
                    b.extend(to_occupancy_message(m, l.envelope.stamp, "map"));
                    out.push(b);
                }
            }
            out
        })
        .unwrap_or_default()
    }
}

async fn reset(shared: &Arc<Shared>) -> anyhow::Result<()> {
    if let Some(Ok(res)) = shared.stop_recording(Some("reset during recording")) {
        log::info!("demo {} saved invalid", res.file);
    }
    let old = shared.session.lock().unwrap().take();
    let cfg = shared.cfg.clone();
    let new = tokio::task::spawn_blocking(move || {
        if let Some(rt) = old {
            let _ = rt.stop();
        }
        start_session(&cfg)
    })
    .await??;
    *shared.session.lock().unwrap() = Some(new);
    *shared.session_id.lock().unwrap() += 1;
    Ok(())
}

/// Router with the socket, the static app and the recording loop bound
/// to one robot session. The session starts before this returns.
pub async fn app(cfg: TeleopConfig) -> anyhow::Result<Router> {
    std::fs::create_dir_all(&cfg.demos)?;
    let side = fire_side(&cfg.scenario);
    let c = cfg.clone();
    let session = tokio::task::spawn_blocking(move || start_session(&c)).await??;
    let shared = Arc::new(Shared {
        cfg,
        side,
        session: Mutex::new(Some(session)),
        session_id: Mutex::new(1),
        recorder: Mutex::new(Recorder::default()),
        steer: Mutex::new(()),
        next_client: Mutex::new(0),
    });
    let rec = Arc::downgrade(&shared);
    let period = Duration::from_secs_f64(0.25 / shared.cfg.record_hz);
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let Some(s) = rec.upgrade() else { break };
            if let Some(res) = s.record_tick() {
                match res {
                    Ok(d) => log::info!("demo {} saved, valid {}", d.file, d.valid),
                    Err(e) => log::error!("saving demo: {e:#}"),
                }
            }
        }
    });
    Ok(Router::new()
        .route("/teleop", get(ws_handler))
        .fallback(static_handler)
        .with_state(shared))
}

pub async fn serve(listener: tokio::net::TcpListener, cfg: TeleopConfig) -> anyhow::Result<()> {
    serve_until(listener, cfg, std::future::pending()).await
}

/// Serves until `shutdown` resolves and open sockets close, then stops
/// the robot session.
pub async fn serve_until(
    listener: tokio::net::TcpListener,
    cfg: TeleopConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    let router = app(cfg).await?;
    axum::serve(listener, router)
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

async fn ws_handler(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> Response {
    ws.on_upgrade(move |socket| client(socket, shared))
}

async fn send_json(socket: &mut WebSocket, msg: &ServerMsg) -> bool {
    let text = serde_json::to_string(msg).expect("server messages serialize");
    socket.send(Message::Text(text.into())).await.is_ok()
}

async fn client(mut socket: WebSocket, shared: Arc<Shared>) {
    let id = {
        let mut n = shared.next_client.lock().unwrap();
        *n += 1;
        *n
    };
    let mut tick = tokio::time::interval(Duration::from_secs_f64(1.0 / shared.cfg.state_hz));
    let mut seq = 0u64;
    let mut last_steer = 0u64;
    let mut seen = (0u64, 0u64);
    let mut announced = shared.recorder.lock().unwrap().count;
    loop {
        tokio::select! {
            _ = tick.tick() => {
                seq += 1;
                if !send_json(&mut socket, &shared.state(seq)).await {
                    break;
                }
                for f in shared.frames(&mut seen) {
                    if socket.send(Message::Binary(f.into())).await.is_err() {
                        break;
                    }
                }
                let last = {
                    let r = shared.recorder.lock().unwrap();
                    (r.count > announced).then(|| r.last.clone()).flatten().map(|d| (r.count, d))
                };
                if let Some((n, d)) = last {
                    announced = n;
                    if !send_json(&mut socket, &ServerMsg::Demo(d)).await {
                        break;
                    }
                }
            }
            msg = socket.recv() => {
                let Some(Ok(msg)) = msg else { break };
                let text = match msg {
                    Message::Text(t) => t,
                    Message::Close(_) => break,
                    _ => continue,
                };
                let warning = match serde_json::from_str::<ClientMsg>(&text) {
                    Err(e) => Some(format!("bad message: {e}")),
                    Ok(ClientMsg::Steer { seq, deg }) => {
                        if seq > last_steer && deg.is_finite() {
                            last_steer = seq;
                            shared.publish_steering(deg);
                        }
                        None
                    }
                    Ok(ClientMsg::Record { action: RecordAction::Start }) => shared.start_recording(id).err(),
                    Ok(ClientMsg::Record { action: RecordAction::Stop }) => match shared.stop_recording(None) {
                        None => Some("stop without start".into()),
                        Some(Err(e)) => Some(format!("saving demo: {e:#}")),
                        Some(Ok(_)) => None,
                    },
                    Ok(ClientMsg::Reset) => reset(&shared).await.err().map(|e| format!("reset failed: {e:#}")),
                };
                if let Some(message) = warning {
                    log::warn!("client {id}: {message}");
                    if !send_json(&mut socket, &ServerMsg::Warning { message }).await {
                        break;
                    }
                }
            }
        }
    }
    // a recording must not outlive its operator
    let owned = shared
        .recorder
        .lock()
        .unwrap()
        .active
        .as_ref()
        .is_some_and(|r| r.owner == id);
    if owned {
        shared.stop_recording(Some("operator disconnected"));
    }
}

const INDEX_HTML: &str = include_str!("teleop_index.html");

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("png") => "image/png",
        Some("svg") => "image/svg+xml",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

/// Request path to a file under `root`; rejects anything that would leave it.
pub fn resolve_static(root: &Path, uri_path: &str) -> Option<PathBuf> {
    let rel = uri_path.trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let mut out = root.to_path_buf();
    for c in Path::new(rel).components() {
        match c {
            Component::Normal(s) => out.push(s),
            _ => return None,
        }
    }
    Some(out)
}

async fn static_handler(State(shared): State<Arc<Shared>>, uri: Uri) -> Response {
    let Some(root) = &shared.cfg.static_dir else {
        return if uri.path() == "/" || uri.path() == "/index.html" {
            (
                [(header::CONTENT_TYPE, "text/html; charset=utf-8")],
                INDEX_HTML,
            )
                .into_response()
        } else {
            StatusCode::NOT_FOUND.into_response()
        };
    };
    let Some(path) = resolve_static(root, uri.path()) else {
        return StatusCode::BAD_REQUEST.into_response();
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}
