//! Wall-clock runner: the fire loop and the robot loop on their own
//! threads, each with its own bus, joined by links that forward envelopes
//! in process or over TCP.

use std::io;
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{
    handshake_client, handshake_server, read_frame, receive_into, write_frame, Bus, BusError,
    Clock, DelayShim, Direction, Payload, TcpSender, Topic, WallClock,
};
use crate::cosim::{
    publish_triplet, render_triplet, ControlInput, Controller, CosimConfig, FireDriver, SimError,
    ThermalWorld,
};
use crate::radiation::{sensor_world_pose, SensorReading, ThermalSensor};
use crate::robot::{tick, Footprint, RobotState};
use crate::scenario::{Scenario, SensorGeometry};

#[derive(Debug, Error)]
pub enum RealtimeError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("no composite for triplet {0} within {1} s")]
    Timeout(u64, f64),
    #[error("{0} thread panicked")]
    Panicked(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Inproc,
    Tcp,
}

impl std::str::FromStr for Transport {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "inproc" => Ok(Transport::Inproc),
            "tcp" => Ok(Transport::Tcp),
            _ => Err(format!("unknown transport `{s}` (inproc, tcp)")),
        }
    }
}

/// Fire loop pause, seconds after the loops start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stall {
    pub after: f64,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct RealtimeConfig {
    pub transport: Transport,
    pub delay_ms: f64,
    pub delay_direction: Direction,
    /// s of fire simulated before the loops start.
    pub warmup: f64,
    /// s of wall time the robot loop runs; it may stop earlier at the goal.
    pub duration: f64,
    pub goal_tolerance: Option<f64>,
    /// Robot loop publishes camera triplets at the camera rate.
    pub camera_loop: bool,
    /// Publish the averaged costmap every n-th fire frame; 0 disables.
    pub costmap_every: u64,
    pub stall: Option<Stall>,
    pub seed: u64,
}

impl RealtimeConfig {
    pub fn new(duration: f64) -> Self {
        RealtimeConfig {
            transport: Transport::Inproc,
            delay_ms: 0.0,
            delay_direction: Direction::Both,
            warmup: 0.0,
            duration,
            goal_tolerance: Some(0.5),
            camera_loop: true,
            costmap_every: 20,
            stall: None,
            seed: 0,
        }
    }
}

/// What the robot loop saw, tick by tick.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RobotLog {
    /// Wall time of each tick on the robot clock, s.
    pub tick_times: Vec<f64>,
    /// Whether the thermal readings were missing or stale at each tick.
    pub stale: Vec<bool>,
    pub trajectory: Vec<RobotState>,
    pub reached_goal: bool,
    pub composites: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FireLog {
    pub frames: u64,
    /// Dose of the body sensor placed at the received odometry, kJ/m^2.
    pub dose: f64,
    /// kW/m^2
    pub peak_irradiance: f64,
    pub rendered: u64,
    /// Stall window actually taken, on the fire clock.
    pub stall_window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealtimeReport {
    pub robot: RobotLog,
    pub fire: FireLog,
    /// Envelopes stored per bus and topic, keyed `robot:<topic>` or
    /// `fire:<topic>`; each bus holds its own publishes and what it received.
    pub message_counts: Vec<(String, u64)>,
    /// Peer minus local clock from the TCP handshake, s.
    pub clock_offset: f64,
}

impl RealtimeReport {
    /// Mean tick period over ticks whose time lies in `[from, to)`, s.
    pub fn mean_period(&self, from: f64, to: f64) -> Option<f64> {
        let t: Vec<f64> = self
            .robot
            .tick_times
            .iter()
            .copied()
            .filter(|&t| t >= from && t < to)
            .collect();
        (t.len() >= 2).then(|| (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64)
    }

    /// Fraction of ticks in `[from, to)` that saw stale readings.
    pub fn stale_fraction(&self, from: f64, to: f64) -> f64 {
        let (mut n, mut s) = (0usize, 0usize);
        for (&t, &st) in self.robot.tick_times.iter().zip(&self.robot.stale) {
            if t >= from && t < to {
                n += 1;
                s += st as usize;
            }
        }
        if n == 0 {
            f64::NAN
        } else {
            s as f64 / n as f64
        }
    }
}

fn sleep_until(clock: &dyn Clock, t: f64) {
    let left = t - clock.now();
    if left > 0.0 {
        thread::sleep(Duration::from_secs_f64(left));
    }
}

enum Sink {
    Bus(Arc<Bus>),
    Tcp(TcpSender),
}

/// Forwards every new envelope of `direction` from `src` through a delay
/// shim into `sink`, polling every millisecond.
fn spawn_forwarder(
    src: Arc<Bus>,
    mut sink: Sink,
    direction: Direction,
    delay_ms: f64,
    clock: Arc<dyn Clock>,
    stop: Arc<AtomicBool>,
) -> JoinHandle<()> {
    thread::spawn(move || {
        let topics: Vec<Topic> = Topic::ALL
            .into_iter()
            .filter(|t| t.direction() == direction)
            .collect();
        let mut last = vec![0u64; topics.len()];
        let mut shim = DelayShim::new(delay_ms);
        while !stop.load(Ordering::Relaxed) {
            let now = clock.now();
            for (t, seen) in topics.iter().zip(last.iter_mut()) {
                if let Some(l) = src.latest(*t, now) {
                    if l.envelope.seq > *seen {
                        *seen = l.envelope.seq;
                        shim.push(l.envelope, now);
                    }
                }
            }
            while let Some(env) = shim.pop_due(now) {
                match &mut sink {
                    Sink::Bus(b) => {
                        b.deliver(env);
                    }
                    Sink::Tcp(s) => {
                        if s.send(&env).is_err() {
                            return;
                        }
                    }
                }
            }
            thread::sleep(Duration::from_millis(1));
        }
    })
}

struct Links {
    threads: Vec<JoinHandle<()>>,
    streams: Vec<TcpStream>,
    offset: f64,
}

fn link_inproc(
    robot: &Arc<Bus>,
    fire: &Arc<Bus>,
    cfg: &RealtimeConfig,
    clock: Arc<dyn Clock>,
    stop: &Arc<AtomicBool>,
) -> Links {
    let delay = |d: Direction| {
        if cfg.delay_direction.includes(d) {
            cfg.delay_ms
        } else {
            0.0
        }
    };
    Links {
        threads: vec![
            spawn_forwarder(
                robot.clone(),
                Sink::Bus(fire.clone()),
                Direction::RobotToFire,
                delay(Direction::RobotToFire),
                clock.clone(),
                stop.clone(),
            ),
            spawn_forwarder(
                fire.clone(),
                Sink::Bus(robot.clone()),
                Direction::FireToRobot,
                delay(Direction::FireToRobot),
                clock,
                stop.clone(),
            ),
        ],
        streams: Vec::new(),
        offset: 0.0,
    }
}

/// Loopback TCP between the two sides, the fire side listening. The robot
/// side runs the clock handshake and tells the fire side the offset.
fn link_tcp(
    robot: &Arc<Bus>,
    fire: &Arc<Bus>,
    cfg: &RealtimeConfig,
    robot_clock: Arc<dyn Clock>,
    fire_clock: Arc<dyn Clock>,
    stop: &Arc<AtomicBool>,
) -> Result<Links, RealtimeError> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let server_clock = fire_clock.clone();
    let server = thread::spawn(move || -> io::Result<(TcpStream, f64)> {
        let (mut s, _) = listener.accept()?;
        handshake_server(&mut s, server_clock.as_ref())?;
        let reply = read_frame(&mut s)?
            .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "offset"))?;
        let offset = f64::from_le_bytes(
            reply
                .as_slice()
                .try_into()
                .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "offset"))?,
        );
        Ok((s, offset))
    });
    let mut client = TcpStream::connect(addr)?;
    let offset = handshake_client(&mut client, robot_clock.as_ref())?;
    write_frame(&mut client, &offset.to_le_bytes())?;
    let (server_stream, _) = server
        .join()
        .map_err(|_| RealtimeError::Panicked("handshake"))??;

    let delay = |d: Direction| {
        if cfg.delay_direction.includes(d) {
            cfg.delay_ms
        } else {
            0.0
        }
    };
    let mut threads = vec![
        spawn_forwarder(
            robot.clone(),
            Sink::Tcp(TcpSender::new(client.try_clone()?)?),
            Direction::RobotToFire,
            delay(Direction::RobotToFire),
            robot_clock.clone(),
            stop.clone(),
        ),
        spawn_forwarder(
            fire.clone(),
            Sink::Tcp(TcpSender::new(server_stream.try_clone()?)?),
            Direction::FireToRobot,
            delay(Direction::FireToRobot),
            fire_clock,
            stop.clone(),
        ),
    ];
    // fire stamps arrive shifted into robot time and the reverse
    let (rb, rs) = (robot.clone(), client.try_clone()?);
    threads.push(thread::spawn(move || {
        let _ = receive_into(rs, &rb, offset);
    }));
    let (fb, fs) = (fire.clone(), server_stream.try_clone()?);
    threads.push(thread::spawn(move || {
        let _ = receive_into(fs, &fb, -offset);
    }));
    Ok(Links {
        threads,
        streams: vec![client, server_stream],
        offset,
    })
}

impl Links {
    fn close(self) {
        for s in &self.streams {
            let _ = s.shutdown(Shutdown::Both);
        }
        for t in self.threads {
            let _ = t.join();
        }
    }
}

struct FireSide {
    sc: Scenario,
    world: ThermalWorld,
    sensors: Vec<ThermalSensor>,
    truth: ThermalSensor,
    bus: Arc<Bus>,
    clock: Arc<dyn Clock>,
    costmap_every: u64,
    stall: Option<Stall>,
}

impl FireSide {
    fn run(
        mut self,
        stop: Arc<AtomicBool>,
        ready: Arc<AtomicBool>,
    ) -> Result<FireLog, RealtimeError> {
        let mut log = FireLog::default();
        let frame_dt = self.world.frame_dt;
        let start = self.sc.start();
        let origin = self.clock.now();
        let mut deadline = origin;
        let mut rendered = 0u64;
        let mut null = ();
        while !stop.load(Ordering::Relaxed) {
            if let Some(st) = self.stall {
                if log.stall_window.is_none() && self.clock.now() - origin >= st.after {
                    let t0 = self.clock.now();
                    while self.clock.now() - t0 < st.length && !stop.load(Ordering::Relaxed) {
                        thread::sleep(Duration::from_millis(5));
                    }
                    log.stall_window = Some((t0, self.clock.now()));
                    deadline = self.clock.now();
                }
            }
            let now = self.clock.now();
            let pose = match self.bus.latest(Topic::RobotOdom, now).map(|l| l.envelope) {
                Some(env) => match &env.payload {
                    Payload::Odom(s) => s.pose(),
                    _ => unreachable!("schema checked on publish"),
                },
                None => RobotState::at(start, 0.0).pose(),
            };
            let mut geoms: Vec<SensorGeometry> = self
                .sensors
                .iter()
                .map(|s| sensor_world_pose(&s.spec, pose))
                .collect();
            geoms.push(sensor_world_pose(&self.truth.spec, pose));
            let c = self.world.step(&geoms)?;
            for (s, e) in self.sensors.iter_mut().zip(&c.sensor_energy) {
                s.record(*e, frame_dt);
            }
            self.truth
                .record(c.sensor_energy[self.sensors.len()], frame_dt);
            log.peak_irradiance = log.peak_irradiance.max(self.truth.filtered_irradiance);
            log.frames += 1;
            let readings: Vec<SensorReading> =
                self.sensors.iter().map(SensorReading::from).collect();
            self.bus.publish(
                Topic::SensorsThermal,
                Payload::Thermal(readings),
                self.clock.now(),
            )?;
            if self.costmap_every > 0 && self.world.frames % self.costmap_every == 0 {
                if let Some(map) = self.world.costmap.average() {
                    self.bus.publish(
                        Topic::CostmapThermal,
                        Payload::Costmap(map),
                        self.clock.now(),
                    )?;
                }
            }
            ready.store(true, Ordering::Release);
            // real-time pacing; new triplets are composited while waiting
            deadline = deadline.max(self.clock.now() - frame_dt) + frame_dt;
            loop {
                if let Some(grid) = self.world.driver.grid() {
                    let now = self.clock.now();
                    if let Some((seq, comp)) =
                        render_triplet(&self.sc, grid, &self.bus, now, rendered, &mut null)
                    {
                        rendered = seq;
                        log.rendered += 1;
                        self.bus.publish(
                            Topic::CameraComposite,
                            Payload::Composite(comp),
                            self.clock.now(),
                        )?;
                    }
                }
                if self.clock.now() >= deadline || stop.load(Ordering::Relaxed) {
                    break;
                }
                thread::sleep(Duration::from_millis(1));
            }
        }
        log.dose = self.truth.dose;
        Ok(log)
    }
}

struct RobotSide {
    sc: Scenario,
    controller: Box<dyn Controller + Send>,
    bus: Arc<Bus>,
    clock: Arc<dyn Clock>,
    duration: f64,
    goal_tolerance: Option<f64>,
    camera_loop: bool,
}

impl RobotSide {
    /// Ticks on absolute deadlines so a late tick does not shift the rest.
    fn run(mut self, stop: Arc<AtomicBool>) -> Result<RobotLog, RealtimeError> {
        let dt = 1.0 / self.sc.robot.rate_hz;
        let camera_every = (self.sc.robot.rate_hz / self.sc.robot.camera_rate_hz)
            .round()
            .max(1.0) as u64;
        let footprint = Footprint::new(
            self.sc.robot.half_width,
            &self.sc.scene,
            glam::DVec2::new(self.sc.domain_size[0], self.sc.domain_size[1]),
        );
        let goal = self.sc.goal();
        let start = self.clock.now();
        let mut state = RobotState::at(self.sc.start(), (goal - self.sc.start()).to_angle());
        let mut log = RobotLog::default();
        let mut triplet = 0u64;
        let mut composites_seen = 0u64;
        let ticks = (self.duration / dt).round() as u64;
        self.bus
            .publish(Topic::RobotOdom, Payload::Odom(state), start)?;
        for k in 1..=ticks {
            if stop.load(Ordering::Relaxed) {
                break;
            }
            sleep_until(self.clock.as_ref(), start + k as f64 * dt);
            let now = self.clock.now();
            let latest = self.bus.latest(Topic::SensorsThermal, now);
            let readings = latest.as_ref().map(|l| match &l.envelope.payload {
                Payload::Thermal(r) => r.clone(),
                _ => unreachable!("schema checked on publish"),
            });
            let stale = latest.as_ref().is_none_or(|l| l.stale);
            let steering = self
                .bus
                .latest(Topic::TeleopSteering, now)
                .filter(|l| !l.stale)
                .map(|l| match l.envelope.payload {
                    Payload::Steering(d) => d,
                    _ => unreachable!("schema checked on publish"),
                });
            let cmd = self.controller.command(&ControlInput {
                now,
                state: &state,
                goal,
                readings: readings.as_deref(),
                readings_stale: stale,
                steering,
            });
            state = tick(&state, cmd, dt, &footprint);
            state.stamp = now;
            self.bus
                .publish(Topic::RobotOdom, Payload::Odom(state), now)?;
            self.bus.publish(Topic::RobotCmd, Payload::Cmd(cmd), now)?;
            if self.camera_loop && k % camera_every == 0 {
                triplet += 1;
                publish_triplet(&self.sc, &self.bus, &state, triplet, self.clock.now())?;
            }
            if let Some(l) = self.bus.latest(Topic::CameraComposite, now) {
                if l.envelope.seq > composites_seen {
                    composites_seen = l.envelope.seq;
                    log.composites += 1;
                }
            }
            log.tick_times.push(now - start);
            log.stale.push(stale);
            log.trajectory.push(state);
            if self
                .goal_tolerance
                .is_some_and(|tol| state.position().distance(goal) <= tol)
            {
                log.reached_goal = true;
                break;
            }
        }
        Ok(log)
    }
}

/// Running fire and robot loops.
pub struct Realtime {
    pub robot_bus: Arc<Bus>,
    pub fire_bus: Arc<Bus>,
    pub robot_clock: Arc<dyn Clock>,
    robot: Option<JoinHandle<Result<RobotLog, RealtimeError>>>,
    fire: Option<JoinHandle<Result<FireLog, RealtimeError>>>,
    links: Option<Links>,
    stop_robot: Arc<AtomicBool>,
    stop_rest: Arc<AtomicBool>,
}

impl Realtime {
    /// Starts the fire loop, waits for its first frame, then links the
    /// buses and starts the robot loop.
    pub fn start(
        sc: &Scenario,
        cfg: &RealtimeConfig,
        controller: Box<dyn Controller + Send>,
    ) -> Result<Realtime, RealtimeError> {
        if cfg.duration <= 0.0 {
            return Err(RealtimeError::Invalid("duration must be positive".into()));
        }
        let robot_clock: Arc<dyn Clock> = Arc::new(WallClock::new());
        let fire_clock: Arc<dyn Clock> = match cfg.transport {
            Transport::Inproc => robot_clock.clone(),
            Transport::Tcp => Arc::new(WallClock::new()),
        };
        let robot_bus = Arc::new(Bus::default());
        let fire_bus = Arc::new(Bus::default());
        let stop_robot = Arc::new(AtomicBool::new(false));
        let stop_rest = Arc::new(AtomicBool::new(false));

        let cc = CosimConfig::for_scenario(sc);
        let driver = FireDriver::live(sc, cfg.seed, cfg.warmup).map_err(SimError::from)?;
        let fire_side = FireSide {
            sc: sc.clone(),
            world: ThermalWorld::new(sc, driver, cfg.seed),
            sensors: cc.sensors.into_iter().map(ThermalSensor::new).collect(),
            truth: ThermalSensor::new(cc.truth),
            bus: fire_bus.clone(),
            clock: fire_clock.clone(),
            costmap_every: cfg.costmap_every,
            stall: cfg.stall,
        };
        let ready = Arc::new(AtomicBool::new(false));
        let (s, r) = (stop_rest.clone(), ready.clone());
        let fire = thread::Builder::new()
            .name("fire".into())
            .spawn(move || fire_side.run(s, r))?;
        while !ready.load(Ordering::Acquire) {
            if fire.is_finished() {
                return Err(match fire.join() {
                    Ok(Err(e)) => e,
                    _ => RealtimeError::Panicked("fire"),
                });
            }
            thread::sleep(Duration::from_millis(1));
        }

        let links = match cfg.transport {
            Transport::Inproc => {
                link_inproc(&robot_bus, &fire_bus, cfg, robot_clock.clone(), &stop_rest)
            }
            Transport::Tcp => link_tcp(
                &robot_bus,
                &fire_bus,
                cfg,
                robot_clock.clone(),
                fire_clock,
                &stop_rest,
            )?,
        };
        let robot_side = RobotSide {
            sc: sc.clone(),
            controller,
            bus: robot_bus.clone(),
            clock: robot_clock.clone(),
            duration: cfg.duration,
            goal_tolerance: cfg.goal_tolerance,
            camera_loop: cfg.camera_loop,
        };
        let s = stop_robot.clone();
        let robot = thread::Builder::new()
            .name("robot".into())
            .spawn(move || robot_side.run(s))?;
        Ok(Realtime {
            robot_bus,
            fire_bus,
            robot_clock,
            robot: Some(robot),
            fire: Some(fire),
            links: Some(links),
            stop_robot,
            stop_rest,
        })
    }

    pub fn robot_finished(&self) -> bool {
        self.robot.as_ref().is_none_or(|r| r.is_finished())
    }

    /// Waits for the robot loop to end on its own, then tears down.
    pub fn join(mut self) -> Result<RealtimeReport, RealtimeError> {
        let robot = self
            .robot
            .take()
            .unwrap()
            .join()
            .map_err(|_| RealtimeError::Panicked("robot"));
        self.finish(robot)
    }

    /// Stops the robot loop now, then tears down in reverse start order.
    pub fn stop(mut self) -> Result<RealtimeReport, RealtimeError> {
        self.stop_robot.store(true, Ordering::Relaxed);
        let robot = self
            .robot
            .take()
            .unwrap()
            .join()
            .map_err(|_| RealtimeError::Panicked("robot"));
        self.finish(robot)
    }

    fn finish(
        &mut self,
        robot: Result<Result<RobotLog, RealtimeError>, RealtimeError>,
    ) -> Result<RealtimeReport, RealtimeError> {
        self.stop_rest.store(true, Ordering::Relaxed);
        let links = self.links.take().unwrap();
        let offset = links.offset;
        links.close();
        let fire = self
            .fire
            .take()
            .unwrap()
            .join()
            .map_err(|_| RealtimeError::Panicked("fire"))??;
        let robot = robot??;
        let mut counts: Vec<(String, u64)> = Vec::new();
        for (side, bus) in [("robot", &self.robot_bus), ("fire", &self.fire_bus)] {
            for (name, n) in bus.counts() {
                if n > 0 {
                    counts.push((format!("{side}:{name}"), n));
                }
            }
        }
        counts.sort();
        Ok(RealtimeReport {
            robot,
            fire,
            message_counts: counts,
            clock_offset: offset,
        })
    }
}

impl Drop for Realtime {
    fn drop(&mut self) {
        self.stop_robot.store(true, Ordering::Relaxed);
        self.stop_rest.store(true, Ordering::Relaxed);
        if let Some(l) = self.links.take() {
            l.close();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTrip {
    /// s
    pub mean: f64,
    pub stddev: f64,
    pub samples: usize,
}

/// Publishes camera triplets from the robot side one at a time and waits
/// for the composite that echoes each one. The robot loop must run with
/// `camera_loop` off so the probe owns the camera topics.
pub fn measure_roundtrip(
    rt: &Realtime,
    sc: &Scenario,
    n: usize,
    timeout: f64,
) -> Result<RoundTrip, RealtimeError> {
    if n == 0 {
        return Err(RealtimeError::Invalid("need at least one sample".into()));
    }
    let clock = rt.robot_clock.clone();
    let state = RobotState::at(sc.start(), (sc.goal() - sc.start()).to_angle());
    let first = rt
        .robot_bus
        .latest(Topic::CameraPose, clock.now())
        .map_or(0, |l| match l.envelope.payload {
            Payload::Pose(p) => p.triplet,
            _ => 0,
        });
    let mut rtts = Vec::with_capacity(n);
    for i in 1..=n as u64 {
        let triplet = first + i;
        let t0 = Instant::now();
        publish_triplet(sc, &rt.robot_bus, &state, triplet, clock.now())?;
        loop {
            let back = rt.robot_bus.latest(Topic::CameraComposite, clock.now()).is_some_and(|l| {
                matches!(&l.envelope.payload, Payload::Composite(c) if c.source_seq >= triplet)
            });
            if back {
                rtts.push(t0.elapsed().as_secs_f64());
                break;
            }
            if t0.elapsed().as_secs_f64() > timeout {
                return Err(RealtimeError::Timeout(triplet, timeout));
            }
            thread::sleep(Duration::from_micros(200));
        }
    }
    let mean = rtts.iter().sum::<f64>() / n as f64;
    let var = rtts.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
    Ok(RoundTrip {
        mean,
        stddev: var.sqrt(),
        samples: n,
    })
}
