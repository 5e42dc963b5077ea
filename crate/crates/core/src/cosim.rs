//! Fire/robot co-simulation in simulated time.
//!
//! The fire side (solver or a recorded tape, radiation transport, sensors,
//! costmap) and the robot side (controller, kinematics) exchange data only
//! through latest-value buses joined by delay shims. Both sides run in one
//! thread on a shared simulated clock, which makes runs reproducible.

use std::borrow::Cow;
use std::sync::Arc;

use glam::DVec2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{
    Bus, BusError, CameraPose, Composite, DelayShim, Direction, Frame, Payload, Topic,
};
use crate::costmap::CostmapAccumulator;
use crate::fire::{FireError, FireGrid, FireSim};
use crate::planner::IrradianceProbe;
use crate::radiation::{
    hot_voxels, sensor_world_pose, Collection, HotVoxel, Pose2, RadiationParams,
    RadiationTransport, SensorReading, ThermalSensor,
};
use crate::render::{composite, raymarch, FireImage, RenderParams};
use crate::robot::{
    render_depth, render_rgb, tick, CameraModel, Command, DepthImage, Footprint, RgbImage,
    RobotState,
};
use crate::scenario::{Scenario, SensorGeometry, SensorSpec};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Fire(#[from] FireError),
    #[error("fire tape exhausted after {0} frames")]
    TapeExhausted(usize),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("{0}")]
    Config(String),
}

/// Derives an independent seed for one consumer of the root seed.
pub fn substream(seed: u64, tag: u64) -> u64 {
    let mut x = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub const FIRE_STREAM: u64 = 1;
pub const RADIATION_STREAM: u64 = 2;

/// Emitters of every frame of a fire run. The fire never depends on the
/// robot, so one recording can drive any number of robot experiments with
/// the exact radiation the live solver would have produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FireTape {
    pub scenario: String,
    pub seed: u64,
    /// Voxel size, m.
    pub h: f64,
    pub frame_dt: f64,
    /// Fire time of the first recorded frame's start, s.
    pub start_time: f64,
    pub frames: Vec<Vec<HotVoxel>>,
}

impl FireTape {
    /// Runs the solver for `warmup` seconds, then records `frames` frames.
    pub fn record(
        sc: &Scenario,
        seed: u64,
        warmup: f64,
        frames: usize,
    ) -> Result<FireTape, FireError> {
        let mut sim = FireSim::new(sc, substream(seed, FIRE_STREAM));
        sim.advance_for(warmup)?;
        Self::continue_from(&mut sim, sc, seed, frames)
    }

    /// Records `frames` further frames of an already running solver.
    pub fn continue_from(
        sim: &mut FireSim,
        sc: &Scenario,
        seed: u64,
        frames: usize,
    ) -> Result<FireTape, FireError> {
        let start_time = sim.time;
        let frame_dt = sc.solver.frame_dt;
        let mut out = Vec::with_capacity(frames);
        for _ in 0..frames {
            sim.advance(frame_dt)?;
            out.push(hot_voxels(&sim.grid, &sc.radiation));
        }
        Ok(FireTape {
            scenario: sc.name.clone(),
            seed,
            h: sim.grid.h,
            frame_dt,
            start_time,
            frames: out,
        })
    }

    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 * self.frame_dt
    }
}

/// Source of hot voxels frame by frame.
#[derive(Debug, Clone)]
pub enum FireDriver {
    Live(Box<FireSim>),
    Replay { tape: Arc<FireTape>, cursor: usize },
}

impl FireDriver {
    pub fn live(sc: &Scenario, seed: u64, warmup: f64) -> Result<Self, FireError> {
        let mut sim = FireSim::new(sc, substream(seed, FIRE_STREAM));
        sim.advance_for(warmup)?;
        Ok(FireDriver::Live(Box::new(sim)))
    }

    pub fn replay(tape: Arc<FireTape>) -> Self {
        FireDriver::Replay { tape, cursor: 0 }
    }

    /// Replay skipping the first `frames` frames of the tape.
    pub fn replay_from(tape: Arc<FireTape>, frames: usize) -> Self {
        FireDriver::Replay {
            tape,
            cursor: frames,
        }
    }

    pub fn advance(&mut self, frame_dt: f64) -> Result<(), SimError> {
        match self {
            FireDriver::Live(sim) => {
                sim.advance(frame_dt)?;
            }
            FireDriver::Replay { tape, cursor } => {
                if *cursor >= tape.frames.len() {
                    return Err(SimError::TapeExhausted(tape.frames.len()));
                }
                *cursor += 1;
            }
        }
        Ok(())
    }

    /// Emitters of the most recent frame.
    pub fn hot(&self, params: &RadiationParams) -> Cow<'_, [HotVoxel]> {
        match self {
            FireDriver::Live(sim) => Cow::Owned(hot_voxels(&sim.grid, params)),
            FireDriver::Replay { tape, cursor } => match cursor.checked_sub(1) {
                Some(k) => Cow::Borrowed(&tape.frames[k]),
                None => Cow::Owned(Vec::new()),
            },
        }
    }

    pub fn h(&self) -> f64 {
        match self {
            FireDriver::Live(sim) => sim.grid.h,
            FireDriver::Replay { tape, .. } => tape.h,
        }
    }

    /// Full field state, only available when running the solver.
    pub fn grid(&self) -> Option<&FireGrid> {
        match self {
            FireDriver::Live(sim) => Some(&sim.grid),
            FireDriver::Replay { .. } => None,
        }
    }
}

/// Fire, radiation transport and ground costmap advanced together.
#[derive(Debug, Clone)]
pub struct ThermalWorld {
    pub driver: FireDriver,
    pub transport: RadiationTransport,
    pub costmap: CostmapAccumulator,
    pub frame_dt: f64,
    pub frames: u64,
}

impl ThermalWorld {
    pub fn new(sc: &Scenario, driver: FireDriver, seed: u64) -> Self {
        ThermalWorld {
            driver,
            transport: RadiationTransport::new(sc, substream(seed, RADIATION_STREAM)),
            costmap: CostmapAccumulator::for_scenario(sc),
            frame_dt: sc.solver.frame_dt,
            frames: 0,
        }
    }

    /// Time since the world started, s.
    pub fn time(&self) -> f64 {
        self.frames as f64 * self.frame_dt
    }

    /// One fire frame: advance the fire, emit, transport, collect on the
    /// world-placed `sensors` and the ground, and push a costmap frame.
    pub fn step(&mut self, sensors: &[SensorGeometry]) -> Result<Collection, SimError> {
        self.driver.advance(self.frame_dt)?;
        let h = self.driver.h();
        let hot = self.driver.hot(&self.transport.params);
        let c = self.transport.step_from(&hot, h, sensors, self.frame_dt);
        self.costmap.push_irradiance(&c.ground_irradiance);
        self.frames += 1;
        Ok(c)
    }
}

/// Walks one sensor through a [`ThermalWorld`], reporting its filtered
/// irradiance after each frame.
pub struct WalkProbe {
    pub world: ThermalWorld,
    pub sensor: ThermalSensor,
    pub error: Option<SimError>,
}

impl WalkProbe {
    pub fn new(world: ThermalWorld, spec: SensorSpec) -> Self {
        WalkProbe {
            world,
            sensor: ThermalSensor::new(spec),
            error: None,
        }
    }
}

impl IrradianceProbe for WalkProbe {
    fn frame_dt(&self) -> f64 {
        self.world.frame_dt
    }

    fn sample(&mut self, pose: Pose2) -> f64 {
        if self.error.is_some() {
            return 0.0;
        }
        let geom = sensor_world_pose(&self.sensor.spec, pose);
        match self.world.step(&[geom]) {
            Ok(c) => {
                self.sensor.record(c.sensor_energy[0], self.world.frame_dt);
                self.sensor.filtered_irradiance
            }
            Err(e) => {
                self.error = Some(e);
                0.0
            }
        }
    }
}

/// What a controller sees on one robot tick.
pub struct ControlInput<'a> {
    pub now: f64,
    pub state: &'a RobotState,
    pub goal: DVec2,
    /// Latest thermal readings received over the bus.
    pub readings: Option<&'a [SensorReading]>,
    pub readings_stale: bool,
    /// Latest steering received on `teleop/steering` within its staleness
    /// budget, degrees.
    pub steering: Option<f64>,
}

pub trait Controller {
    fn command(&mut self, input: &ControlInput) -> Command;
}

/// Drives straight at the goal, ignoring radiation.
#[derive(Debug, Clone, Copy)]
pub struct GoalSeek {
    pub speed: f64,
}

impl Controller for GoalSeek {
    fn command(&mut self, input: &ControlInput) -> Command {
        Command::along(input.goal - input.state.position(), self.speed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosimConfig {
    /// Robot loop period, s.
    pub robot_dt: f64,
    pub delay_ms: f64,
    pub delay_direction: Direction,
    /// s of simulated time before giving up.
    pub timeout: f64,
    /// m; `None` runs until the timeout.
    pub goal_tolerance: Option<f64>,
    /// Attached sensors reported to the robot; placed from received odometry.
    pub sensors: Vec<SensorSpec>,
    /// Body sensor for the dose, placed at the true pose every frame.
    pub truth: SensorSpec,
    /// Stop at the first fire-source entry.
    pub stop_on_fire_entry: bool,
    /// Robot log decimation: record every n-th tick.
    pub log_every: usize,
    /// Publish camera triplets at the robot's camera rate and composite
    /// the fire over them (live fire only).
    pub camera: bool,
    /// Publish the averaged costmap every n-th fire frame; 0 disables.
    pub costmap_every: u64,
}

impl CosimConfig {
    pub fn for_scenario(sc: &Scenario) -> Self {
        let truth = sc
            .sensors
            .iter()
            .find(|s| matches!(s.geometry, SensorGeometry::Cuboid { .. }) && s.attached)
            .cloned()
            .unwrap_or_else(|| SensorSpec::spot_cuboid("spot"));
        let sensors = sc
            .sensors
            .iter()
            .filter(|s| s.attached && s.id != truth.id)
            .cloned()
            .collect();
        CosimConfig {
            robot_dt: 1.0 / sc.robot.rate_hz,
            delay_ms: 0.0,
            delay_direction: Direction::Both,
            timeout: 40.0,
            goal_tolerance: Some(0.5),
            sensors,
            truth,
            stop_on_fire_entry: false,
            log_every: 1,
            camera: false,
            costmap_every: 0,
        }
    }
}

/// Fire-side record of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorLogRow {
    /// s
    pub stamp: f64,
    /// Filtered readings of the reported sensors in configured order.
    pub filtered: Vec<f64>,
    /// Truth body sensor: raw, filtered (kW/m^2) and dose (kJ/m^2).
    pub truth_raw: f64,
    pub truth_filtered: f64,
    pub truth_dose: f64,
    /// True robot position at the frame.
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosimOutcome {
    pub reached_goal: bool,
    /// Composites the robot received.
    pub composites: u64,
    /// s
    pub elapsed: f64,
    /// Truth-sensor dose, kJ/m^2.
    pub dose: f64,
    /// Peak truth-sensor filtered irradiance, kW/m^2.
    pub peak_irradiance: f64,
    pub fire_entry: bool,
    /// Smallest distance from the robot center to a source edge, m.
    pub min_clearance: f64,
    pub path_length: f64,
    pub trajectory: Vec<RobotState>,
    pub sensor_ids: Vec<String>,
    pub sensor_log: Vec<SensorLogRow>,
    pub message_counts: Vec<(String, u64)>,
}

/// Distance from `p` to the nearest source edge (negative inside).
pub fn fire_clearance(sc: &Scenario, p: DVec2) -> f64 {
    sc.fires
        .iter()
        .map(|f| p.distance(DVec2::new(f.center[0], f.center[1])) - f.radius)
        .fold(f64::INFINITY, f64::min)
}

/// One rendered camera triplet.
pub struct CameraFrames<'a> {
    pub triplet: u64,
    pub camera: &'a CameraModel,
    pub rgb: &'a RgbImage,
    pub depth: &'a DepthImage,
    pub fire: &'a FireImage,
    pub composite: &'a RgbImage,
}

/// Side channel for artifacts a run produces on the fire side.
pub trait CosimObserver {
    fn fire_frame(&mut self, _stamp: f64, _world: &ThermalWorld) {}
    fn camera_frames(&mut self, _stamp: f64, _frames: &CameraFrames) {}
}

impl CosimObserver for () {}

fn payload<T>(
    bus: &Bus,
    topic: Topic,
    now: f64,
    f: impl FnOnce(&Payload) -> Option<T>,
) -> Option<T> {
    bus.latest(topic, now).and_then(|l| f(&l.envelope.payload))
}

/// Newest rgb, depth and pose that share one triplet number.
fn latest_triplet(
    bus: &Bus,
    now: f64,
) -> Option<(
    CameraPose,
    Arc<crate::bridge::Envelope>,
    Arc<crate::bridge::Envelope>,
)> {
    let pose = payload(bus, Topic::CameraPose, now, |p| match p {
        Payload::Pose(c) => Some(*c),
        _ => None,
    })?;
    let rgb = bus.latest(Topic::CameraRgb, now)?.envelope;
    let depth = bus.latest(Topic::CameraDepth, now)?.envelope;
    match (&rgb.payload, &depth.payload) {
        (Payload::Rgb(r), Payload::Depth(d))
            if r.triplet == pose.triplet && d.triplet == pose.triplet =>
        {
            Some((pose, rgb, depth))
        }
        _ => None,
    }
}

/// Fire-side compositing of the newest complete triplet newer than
/// `last`. Returns the triplet number and the composite.
pub(crate) fn render_triplet(
    sc: &Scenario,
    grid: &FireGrid,
    bus: &Bus,
    now: f64,
    last: u64,
    observer: &mut dyn CosimObserver,
) -> Option<(u64, Composite)> {
    let (pose, rgb, depth) = latest_triplet(bus, now)?;
    if pose.triplet <= last {
        return None;
    }
    let (Payload::Rgb(rgb), Payload::Depth(depth)) = (&rgb.payload, &depth.payload) else {
        return None;
    };
    let cam = CameraModel::from_pose7(pose.pose, &sc.robot);
    let fire = raymarch(
        grid,
        &cam,
        &depth.image,
        &RenderParams::default(),
        pose.triplet,
    )
    .ok()?;
    let image = composite(&rgb.image, &fire).ok()?;
    observer.camera_frames(
        now,
        &CameraFrames {
            triplet: pose.triplet,
            camera: &cam,
            rgb: &rgb.image,
            depth: &depth.image,
            fire: &fire,
            composite: &image,
        },
    );
    Some((
        pose.triplet,
        Composite {
            source_seq: pose.triplet,
            image,
        },
    ))
}

/// Publishes one rgb/depth/pose triplet of the camera at `state`.
pub(crate) fn publish_triplet(
    sc: &Scenario,
    bus: &Bus,
    state: &RobotState,
    triplet: u64,
    stamp: f64,
) -> Result<[Arc<crate::bridge::Envelope>; 3], BusError> {
    let cam = CameraModel::mounted(state, &sc.robot);
    let rgb = render_rgb(&sc.scene, &cam);
    let depth = render_depth(&sc.scene, &cam);
    Ok([
        bus.publish(
            Topic::CameraRgb,
            Payload::Rgb(Frame {
                triplet,
                image: rgb,
            }),
            stamp,
        )?,
        bus.publish(
            Topic::CameraDepth,
            Payload::Depth(Frame {
                triplet,
                image: depth,
            }),
            stamp,
        )?,
        bus.publish(
            Topic::CameraPose,
            Payload::Pose(CameraPose {
                triplet,
                pose: cam.pose7(),
            }),
            stamp,
        )?,
    ])
}

/// Runs the robot against `world` in simulated time.
///
/// Per robot tick: when a fire frame boundary is reached the fire side
/// reads the latest odometry it has received, places the reported sensors
/// there (the truth sensor at the true pose), steps the world over the
/// elapsed frame and publishes readings. Then the robot side reads the
/// latest readings it has received, asks the controller for a command,
/// integrates and publishes odometry. Envelopes crossing sides pass
/// through delay shims.
pub fn run_cosim(
    sc: &Scenario,
    world: &mut ThermalWorld,
    controller: &mut dyn Controller,
    start: RobotState,
    cfg: &CosimConfig,
) -> Result<CosimOutcome, SimError> {
    run_cosim_observed(sc, world, controller, start, cfg, &mut ())
}

/// [`run_cosim`] reporting fire frames and camera renders to `observer`.
pub fn run_cosim_observed(
    sc: &Scenario,
    world: &mut ThermalWorld,
    controller: &mut dyn Controller,
    start: RobotState,
    cfg: &CosimConfig,
    observer: &mut dyn CosimObserver,
) -> Result<CosimOutcome, SimError> {
    let ratio = (world.frame_dt / cfg.robot_dt).round() as u64;
    if ratio == 0 || ((ratio as f64) * cfg.robot_dt - world.frame_dt).abs() > 1e-9 {
        return Err(SimError::Config(format!(
            "fire frame {} s is not a multiple of the robot period {} s",
            world.frame_dt, cfg.robot_dt
        )));
    }
    let delay = |d: Direction| {
        if cfg.delay_direction.includes(d) {
            cfg.delay_ms
        } else {
            0.0
        }
    };
    let robot_out = Bus::default();
    let fire_in = Bus::default();
    let fire_out = Bus::default();
    let robot_in = Bus::default();
    let mut to_fire = DelayShim::new(delay(Direction::RobotToFire));
    let mut to_robot = DelayShim::new(delay(Direction::FireToRobot));

    let footprint = Footprint::new(
        sc.robot.half_width,
        &sc.scene,
        DVec2::new(sc.domain_size[0], sc.domain_size[1]),
    );
    let goal = sc.goal();
    let mut sensors: Vec<ThermalSensor> = cfg
        .sensors
        .iter()
        .cloned()
        .map(ThermalSensor::new)
        .collect();
    let mut truth = ThermalSensor::new(cfg.truth.clone());
    let frame_dt = world.frame_dt;

    let mut state = RobotState {
        stamp: 0.0,
        ..start
    };
    to_fire.push(
        robot_out.publish(Topic::RobotOdom, Payload::Odom(state), 0.0)?,
        0.0,
    );

    let camera_every = (1.0 / (sc.robot.camera_rate_hz * cfg.robot_dt))
        .round()
        .max(1.0) as u64;
    let mut triplet = 0u64;
    let mut rendered = 0u64;
    let mut composites_seen = 0u64;

    let mut out = CosimOutcome {
        reached_goal: false,
        composites: 0,
        elapsed: 0.0,
        dose: 0.0,
        peak_irradiance: 0.0,
        fire_entry: false,
        min_clearance: fire_clearance(sc, state.position()),
        path_length: 0.0,
        trajectory: vec![state],
        sensor_ids: cfg.sensors.iter().map(|s| s.id.clone()).collect(),
        sensor_log: Vec::new(),
        message_counts: Vec::new(),
    };
    let ticks = (cfg.timeout / cfg.robot_dt).round() as u64;
    for k in 1..=ticks {
        let now = k as f64 * cfg.robot_dt;
        let prev_now = now - cfg.robot_dt;

        // fire side, covering (now - frame_dt, now]
        if k % ratio == 0 {
            to_fire.pump(prev_now, &fire_in);
            let placed = match fire_in.latest(Topic::RobotOdom, prev_now) {
                Some(l) => match &l.envelope.payload {
                    Payload::Odom(s) => s.pose(),
                    _ => unreachable!("schema checked on publish"),
                },
                None => start.pose(),
            };
            let mut geoms: Vec<SensorGeometry> = sensors
                .iter()
                .map(|s| sensor_world_pose(&s.spec, placed))
                .collect();
            geoms.push(sensor_world_pose(&truth.spec, state.pose()));
            let c = world.step(&geoms)?;
            for (s, e) in sensors.iter_mut().zip(&c.sensor_energy) {
                s.record(*e, frame_dt);
            }
            truth.record(c.sensor_energy[sensors.len()], frame_dt);
            out.peak_irradiance = out.peak_irradiance.max(truth.filtered_irradiance);
            let readings: Vec<SensorReading> = sensors.iter().map(SensorReading::from).collect();
            out.sensor_log.push(SensorLogRow {
                stamp: prev_now,
                filtered: sensors.iter().map(|s| s.filtered_irradiance).collect(),
                truth_raw: truth.raw_irradiance,
                truth_filtered: truth.filtered_irradiance,
                truth_dose: truth.dose,
                x: state.x,
                y: state.y,
            });
            to_robot.push(
                fire_out.publish(Topic::SensorsThermal, Payload::Thermal(readings), prev_now)?,
                prev_now,
            );
            observer.fire_frame(prev_now, world);
            if cfg.costmap_every > 0 && world.frames % cfg.costmap_every == 0 {
                if let Some(map) = world.costmap.average() {
                    to_robot.push(
                        fire_out.publish(Topic::CostmapThermal, Payload::Costmap(map), prev_now)?,
                        prev_now,
                    );
                }
            }
            if cfg.camera {
                if let Some(grid) = world.driver.grid() {
                    if let Some((seq, comp)) =
                        render_triplet(sc, grid, &fire_in, prev_now, rendered, observer)
                    {
                        rendered = seq;
                        to_robot.push(
                            fire_out.publish(
                                Topic::CameraComposite,
                                Payload::Composite(comp),
                                prev_now,
                            )?,
                            prev_now,
                        );
                    }
                }
            }
        }

        // robot side, tick from prev_now to now
        to_robot.pump(prev_now, &robot_in);
        let latest = robot_in.latest(Topic::SensorsThermal, prev_now);
        let readings = latest.as_ref().map(|l| match &l.envelope.payload {
            Payload::Thermal(r) => r.as_slice(),
            _ => unreachable!("schema checked on publish"),
        });
        let steering = robot_in
            .latest(Topic::TeleopSteering, prev_now)
            .filter(|l| !l.stale)
            .map(|l| match l.envelope.payload {
                Payload::Steering(d) => d,
                _ => unreachable!("schema checked on publish"),
            });
        let input = ControlInput {
            now: prev_now,
            state: &state,
            goal,
            readings,
            readings_stale: latest.as_ref().is_none_or(|l| l.stale),
            steering,
        };
        let cmd = controller.command(&input);
        let next = tick(&state, cmd, cfg.robot_dt, &footprint);
        out.path_length += next.position().distance(state.position());
        state = next;
        to_fire.push(
            robot_out.publish(Topic::RobotOdom, Payload::Odom(state), now)?,
            now,
        );
        robot_out.publish(Topic::RobotCmd, Payload::Cmd(cmd), now)?;
        if cfg.camera && k % camera_every == 0 {
            triplet += 1;
            for env in publish_triplet(sc, &robot_out, &state, triplet, now)? {
                to_fire.push(env, now);
            }
        }
        if let Some(l) = robot_in.latest(Topic::CameraComposite, now) {
            if l.envelope.seq > composites_seen {
                composites_seen = l.envelope.seq;
                out.composites += 1;
            }
        }

        let clearance = fire_clearance(sc, state.position());
        out.min_clearance = out.min_clearance.min(clearance);
        if clearance < sc.robot.half_width {
            out.fire_entry = true;
        }
        if k as usize % cfg.log_every.max(1) == 0 {
            out.trajectory.push(state);
        }
        out.elapsed = now;
        if cfg
            .goal_tolerance
            .is_some_and(|tol| state.position().distance(goal) <= tol)
        {
            out.reached_goal = true;
            break;
        }
        if cfg.stop_on_fire_entry && out.fire_entry {
            break;
        }
    }
    out.dose = truth.dose;
    let mut counts: Vec<(String, u64)> = Vec::new();
    for bus in [&robot_out, &fire_out] {
        for (name, n) in bus.counts() {
            if n > 0 {
                counts.push((name.to_string(), n));
            }
        }
    }
    counts.sort();
    out.message_counts = counts;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::reactive_line;

    fn small() -> Scenario {
        let mut sc = reactive_line();
        sc.domain_size = [4.0, 3.0, 2.0];
        sc.voxel_size = 0.25;
        sc.fires[0].center = [2.0, 1.5, 0.125];
        sc.fires[0].heat_release_rate = 20.0;
        sc.robot_start = [0.5, 0.5];
        sc.robot_goal = [3.5, 0.5];
        sc
    }

    #[test]
    fn replay_matches_live_bit_for_bit() {
        let sc = small();
        let tape = Arc::new(FireTape::record(&sc, 5, 0.5, 6).unwrap());
        let mut live = ThermalWorld::new(&sc, FireDriver::live(&sc, 5, 0.5).unwrap(), 5);
        let mut replay = ThermalWorld::new(&sc, FireDriver::replay(tape), 5);
        let sensor = [SensorGeometry::Sphere {
            center: [2.0, 0.6, 0.5],
            radius: 0.3,
        }];
        for _ in 0..6 {
            assert_eq!(live.step(&sensor).unwrap(), replay.step(&sensor).unwrap());
        }
        assert_eq!(replay.step(&sensor), Err(SimError::TapeExhausted(6)));
    }

    #[test]
    fn goal_seek_without_fire_arrives_on_time() {
        let mut sc = small();
        sc.fires.clear();
        let tape = Arc::new(FireTape::record(&sc, 1, 0.0, 200).unwrap());
        let mut world = ThermalWorld::new(&sc, FireDriver::replay(tape), 1);
        let cfg = CosimConfig {
            goal_tolerance: Some(0.01),
            timeout: 9.0,
            ..CosimConfig::for_scenario(&sc)
        };
        let start = RobotState::at(sc.start(), 0.0);
        let out = run_cosim(&sc, &mut world, &mut GoalSeek { speed: 1.0 }, start, &cfg).unwrap();
        assert!(out.reached_goal);
        assert!((out.elapsed - 2.99).abs() < 0.05, "{}", out.elapsed);
        assert_eq!(out.dose, 0.0);
    }

    #[test]
    fn camera_triplets_come_back_composited() {
        struct Count(u64, bool);
        impl CosimObserver for Count {
            fn camera_frames(&mut self, _: f64, f: &CameraFrames) {
                self.0 += 1;
                self.1 |= f.fire.alpha.iter().any(|&a| a > 0.0);
            }
        }
        let mut sc = small();
        sc.robot.camera_width = 32;
        sc.robot.camera_height = 24;
        let mut world = ThermalWorld::new(&sc, FireDriver::live(&sc, 3, 1.0).unwrap(), 3);
        let cfg = CosimConfig {
            timeout: 1.0,
            camera: true,
            costmap_every: 5,
            ..CosimConfig::for_scenario(&sc)
        };
        let mut seen = Count(0, false);
        let start = RobotState::at(sc.start(), 0.3);
        let out = run_cosim_observed(
            &sc,
            &mut world,
            &mut GoalSeek { speed: 0.2 },
            start,
            &cfg,
            &mut seen,
        )
        .unwrap();
        assert!(out.composites > 0);
        assert!(seen.0 >= out.composites);
        assert!(seen.1, "the fire should show up in some frame");
        let count = |name: &str| {
            out.message_counts
                .iter()
                .find(|c| c.0 == name)
                .map_or(0, |c| c.1)
        };
        assert_eq!(count("camera/rgb"), count("camera/pose"));
        assert!(count("costmap/thermal") > 0);
    }

    #[test]
    fn substreams_differ() {
        assert_ne!(substream(7, FIRE_STREAM), substream(7, RADIATION_STREAM));
        assert_eq!(substream(7, FIRE_STREAM), substream(7, FIRE_STREAM));
    }
}
