//! Experiment drivers: costmap planning with sensor walks, the reactive
//! controller against a straight-line baseline, and the delay sweep.

use std::io;
use std::path::Path;
use std::sync::Arc;

use glam::DVec2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::Direction;
use crate::cosim::{
    run_cosim, run_cosim_observed, substream, ControlInput, Controller, CosimConfig, CosimObserver,
    CosimOutcome, FireDriver, FireTape, GoalSeek, SimError, ThermalWorld, WalkProbe, FIRE_STREAM,
};
use crate::costmap::ThermalCostmap;
use crate::fire::{FireError, FireSim};
use crate::planner::{
    lethal_mask, plan, sensor_walk, DoseReport, PlanError, PlanRequest, PlannedPath,
};
use crate::reactive::{compute_velocity, ReactiveConfig};
use crate::robot::{Command, RobotState};
use crate::scenario::{Scenario, SensorGeometry, SensorSpec};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("{0}")]
    Invalid(String),
}

impl From<FireError> for ExperimentError {
    fn from(e: FireError) -> Self {
        ExperimentError::Sim(SimError::Fire(e))
    }
}

/// The attached cuboid dose sensor of a scenario, or the Spot preset.
pub fn body_sensor(sc: &Scenario) -> SensorSpec {
    sc.sensors
        .iter()
        .find(|s| s.attached && matches!(s.geometry, SensorGeometry::Cuboid { .. }))
        .cloned()
        .unwrap_or_else(|| SensorSpec::spot_cuboid("spot"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSweepConfig {
    pub weights: Vec<f64>,
    /// s of fire before the costmap starts accumulating.
    pub warmup: f64,
    /// Fire frames averaged into the costmap.
    pub costmap_frames: usize,
    /// m/s
    pub speed: f64,
}

impl WeightSweepConfig {
    pub fn for_scenario(sc: &Scenario) -> Self {
        WeightSweepConfig {
            weights: vec![0.0, 5.0, 30.0],
            warmup: 6.0,
            costmap_frames: sc.costmap.window,
            speed: sc.robot.speed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSweepRow {
    pub weight: f64,
    /// m
    pub distance: f64,
    pub cost: f64,
    /// kJ/m^2
    pub dose: f64,
    /// Peak filtered body-sensor irradiance, kW/m^2.
    pub peak_irradiance: f64,
    /// Largest costmap irradiance on the path, kW/m^2.
    pub predicted_peak: f64,
    pub path: PlannedPath,
    pub walk: DoseReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSweep {
    pub costmap: ThermalCostmap,
    pub rows: Vec<WeightSweepRow>,
}

/// Builds the averaged costmap from the running fire, plans one path per
/// weight, then walks the body sensor along each path through the same
/// stretch of fire.
pub fn run_weight_sweep(sc: &Scenario, seed: u64, cfg: &WeightSweepConfig) -> Result<WeightSweep, ExperimentError> {
    if cfg.weights.is_empty() {
        return Err(ExperimentError::Invalid("no weights given".into()));
    }
    let mut sim = FireSim::new(sc, substream(seed, FIRE_STREAM));
    sim.advance_for(cfg.warmup)?;
    let tape = Arc::new(FireTape::continue_from(
        &mut sim,
        sc,
        seed,
        cfg.costmap_frames,
    )?);
    let mut world = ThermalWorld::new(sc, FireDriver::replay(tape), seed);
    for _ in 0..cfg.costmap_frames {
        world.step(&[])?;
    }
    let costmap = world
        .costmap
        .average()
        .ok_or_else(|| ExperimentError::Invalid("costmap window never filled".into()))?;
    let lethal = (!sc.scene.is_empty()).then(|| lethal_mask(&costmap, &sc.scene));
    let mut paths = Vec::new();
    for &w in &cfg.weights {
        let req = PlanRequest {
            start: sc.start(),
            goal: sc.goal(),
            weight: w,
            costmap: &costmap,
            lethal: lethal.as_deref(),
        };
        paths.push(plan(&req)?);
    }
    let longest = paths.iter().map(|p| p.length).fold(0.0, f64::max);
    let frames = (longest / cfg.speed / sc.solver.frame_dt).ceil() as usize + 2;
    let walk_tape = Arc::new(FireTape::continue_from(&mut sim, sc, seed, frames)?);
    let mut rows = Vec::new();
    for (path, &weight) in paths.into_iter().zip(&cfg.weights) {
        let world = ThermalWorld::new(sc, FireDriver::replay(walk_tape.clone()), seed);
        let mut probe = WalkProbe::new(world, body_sensor(sc));
        let walk = sensor_walk(&path, cfg.speed, &mut probe)?;
        if let Some(e) = probe.error {
            return Err(e.into());
        }
        rows.push(WeightSweepRow {
            weight,
            distance: path.length,
            cost: path.cost,
            dose: walk.dose,
            peak_irradiance: walk.peak_irradiance,
            predicted_peak: path.predicted_peak,
            path,
            walk,
        });
    }
    Ok(WeightSweep { costmap, rows })
}

impl WeightSweep {
    /// One row per weight: distance, dose, measured and predicted peaks.
    pub fn write_dose_csv(&self, path: &Path) -> io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "weight",
            "distance_m",
            "dose_kj_m2",
            "peak_kw_m2",
            "predicted_peak_kw_m2",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.weight.to_string(),
                format!("{:.4}", r.distance),
                format!("{:.6}", r.dose),
                format!("{:.6}", r.peak_irradiance),
                format!("{:.6}", r.predicted_peak),
            ])?;
        }
        w.flush()
    }
}

pub fn write_path_csv(path: &Path, planned: &PlannedPath) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y"])?;
    for p in &planned.waypoints {
        w.write_record([format!("{:.4}", p[0]), format!("{:.4}", p[1])])?;
    }
    w.flush()
}

pub fn write_trajectory_csv(path: &Path, traj: &[RobotState]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["stamp", "x", "y", "heading"])?;
    for s in traj {
        w.write_record([
            format!("{:.4}", s.stamp),
            format!("{:.6}", s.x),
            format!("{:.6}", s.y),
            format!("{:.6}", s.heading),
        ])?;
    }
    w.flush()
}

pub fn write_sensor_log_csv(path: &Path, out: &CosimOutcome) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["stamp".to_string()];
    header.extend(out.sensor_ids.iter().cloned());
    header.extend(["body_raw", "body_filtered", "body_dose", "x", "y"].map(String::from));
    w.write_record(&header)?;
    for r in &out.sensor_log {
        let mut rec = vec![format!("{:.4}", r.stamp)];
        rec.extend(r.filtered.iter().map(|v| format!("{v:.6}")));
        rec.extend([r.truth_raw, r.truth_filtered, r.truth_dose].map(|v| format!("{v:.6}")));
        rec.extend([r.x, r.y].map(|v| format!("{v:.6}")));
        w.write_record(&rec)?;
    }
    w.flush()
}

/// Drives along [`compute_velocity`] of the latest received corner
/// readings, translating without turning the body.
pub struct ReactiveController {
    pub cfg: ReactiveConfig,
}

impl Controller for ReactiveController {
    fn command(&mut self, input: &ControlInput) -> Command {
        let q = input.readings.map_or([0.0; 4], |r| self.cfg.pick(r));
        let v = compute_velocity(&q, input.state.pose(), input.goal, &self.cfg) * self.cfg.speed;
        Command::Velocity { vx: v.x, vy: v.y }
    }
}

/// Pure pursuit along planned waypoints.
pub struct PathFollower {
    pub waypoints: Vec<DVec2>,
    /// m
    pub lookahead: f64,
    /// m/s
    pub speed: f64,
    next: usize,
}

impl PathFollower {
    pub fn new(path: &PlannedPath, lookahead: f64, speed: f64) -> Self {
        PathFollower {
            waypoints: path
                .waypoints
                .iter()
                .map(|w| DVec2::from_array(*w))
                .collect(),
            lookahead,
            speed,
            next: 0,
        }
    }
}

impl Controller for PathFollower {
    fn command(&mut self, input: &ControlInput) -> Command {
        let p = input.state.position();
        let last = self.waypoints.len().saturating_sub(1);
        while self.next < last && p.distance(self.waypoints[self.next]) < self.lookahead {
            self.next += 1;
        }
        let Some(target) = self.waypoints.get(self.next) else {
            return Command::Stop;
        };
        let d = *target - p;
        if d.length() < 1e-9 {
            return Command::Stop;
        }
        Command::Heading {
            heading: d.to_angle(),
            speed: self.speed.min(d.length() / 0.01),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullRunConfig {
    /// s of fire before the costmap starts accumulating.
    pub warmup: f64,
    /// Planner heat weight.
    pub weight: f64,
    /// s of robot motion.
    pub timeout: f64,
    pub camera: bool,
    pub delay_ms: f64,
    pub delay_direction: Direction,
}

impl Default for FullRunConfig {
    fn default() -> Self {
        FullRunConfig {
            warmup: 3.0,
            weight: 5.0,
            timeout: 30.0,
            camera: true,
            delay_ms: 0.0,
            delay_direction: Direction::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullRun {
    pub costmap: ThermalCostmap,
    pub path: PlannedPath,
    pub outcome: CosimOutcome,
}

/// Live fire for `warmup` s, one costmap window, a plan at `weight`, then
/// the robot follows the plan in co-simulation with the camera loop on.
pub fn run_full(
    sc: &Scenario,
    seed: u64,
    cfg: &FullRunConfig,
    observer: &mut dyn CosimObserver,
) -> Result<FullRun, ExperimentError> {
    let mut world = ThermalWorld::new(sc, FireDriver::live(sc, seed, cfg.warmup)?, seed);
    for _ in 0..sc.costmap.window {
        world.step(&[])?;
    }
    let costmap = world
        .costmap
        .average()
        .ok_or_else(|| ExperimentError::Invalid("costmap window never filled".into()))?;
    let lethal = (!sc.scene.is_empty()).then(|| lethal_mask(&costmap, &sc.scene));
    let path = plan(&PlanRequest {
        start: sc.start(),
        goal: sc.goal(),
        weight: cfg.weight,
        costmap: &costmap,
        lethal: lethal.as_deref(),
    })?;
    let mut ccfg = CosimConfig::for_scenario(sc);
    ccfg.timeout = cfg.timeout;
    ccfg.camera = cfg.camera;
    ccfg.costmap_every = 20;
    ccfg.delay_ms = cfg.delay_ms;
    ccfg.delay_direction = cfg.delay_direction;
    ccfg.truth = body_sensor(sc);
    let mut follower = PathFollower::new(&path, 0.5, sc.robot.speed);
    let heading = path
        .waypoints
        .get(1)
        .map_or(0.0, |w| (DVec2::from_array(*w) - sc.start()).to_angle());
    let start = RobotState::at(sc.start(), heading);
    let outcome = run_cosim_observed(sc, &mut world, &mut follower, start, &ccfg, observer)?;
    Ok(FullRun {
        costmap,
        path,
        outcome,
    })
}

/// Start pose facing the goal.
pub fn start_state(sc: &Scenario) -> RobotState {
    RobotState::at(sc.start(), (sc.goal() - sc.start()).to_angle())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactiveRun {
    pub reactive: ReactiveConfig,
    pub delay_ms: f64,
    pub delay_direction: Direction,
    /// s
    pub timeout: f64,
}

impl Default for ReactiveRun {
    fn default() -> Self {
        ReactiveRun {
            reactive: ReactiveConfig::default(),
            delay_ms: 0.0,
            delay_direction: Direction::FireToRobot,
            timeout: 30.0,
        }
    }
}

/// Warms the fire for `warmup` seconds and records enough frames for a
/// run of `timeout` seconds.
pub fn record_tape(
    sc: &Scenario,
    seed: u64,
    warmup: f64,
    timeout: f64,
) -> Result<FireTape, FireError> {
    FireTape::record(
        sc,
        seed,
        warmup,
        (timeout / sc.solver.frame_dt).ceil() as usize,
    )
}

fn cosim_config(sc: &Scenario, run: &ReactiveRun, timeout: f64) -> CosimConfig {
    let mut cfg = CosimConfig::for_scenario(sc);
    cfg.delay_ms = run.delay_ms;
    cfg.delay_direction = run.delay_direction;
    cfg.timeout = timeout;
    cfg.goal_tolerance = Some(run.reactive.goal_tolerance);
    cfg.truth = body_sensor(sc);
    cfg.sensors = run
        .reactive
        .sensor_ids
        .iter()
        .map(|id| {
            sc.sensor(id)
                .cloned()
                .ok_or_else(|| format!("scenario has no sensor `{id}`"))
        })
        .collect::<Result<_, _>>()
        .unwrap_or(cfg.sensors);
    cfg
}

/// Runs the reactive controller against a replayed fire.
pub fn run_reactive(
    sc: &Scenario,
    tape: Arc<FireTape>,
    seed: u64,
    run: &ReactiveRun,
) -> Result<CosimOutcome, SimError> {
    let timeout = run.timeout.min(tape.duration());
    let cfg = cosim_config(sc, run, timeout);
    let mut world = ThermalWorld::new(sc, FireDriver::replay(tape), seed);
    let mut ctl = ReactiveController {
        cfg: run.reactive.clone(),
    };
    run_cosim(sc, &mut world, &mut ctl, start_state(sc), &cfg)
}

/// Straight-line goal seeking with the same sensors, for comparison.
pub fn run_baseline(
    sc: &Scenario,
    tape: Arc<FireTape>,
    seed: u64,
    run: &ReactiveRun,
) -> Result<CosimOutcome, SimError> {
    let timeout = run.timeout.min(tape.duration());
    let cfg = cosim_config(sc, run, timeout);
    let mut world = ThermalWorld::new(sc, FireDriver::replay(tape), seed);
    let mut ctl = GoalSeek {
        speed: run.reactive.speed,
    };
    run_cosim(sc, &mut world, &mut ctl, start_state(sc), &cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactiveSummary {
    pub reached_goal: bool,
    /// m
    pub final_goal_distance: f64,
    /// Largest filtered corner reading, kW/m^2.
    pub peak_corner: f64,
    /// Time of the largest front-pair reading, s.
    pub front_peak_time: f64,
    /// Time of closest approach to the first fire center, s.
    pub closest_time: f64,
    /// m
    pub closest_distance: f64,
    /// Start of the first sustained stretch with the rear pair above the
    /// front pair, after the front pair has led; s.
    pub crossover_time: Option<f64>,
    pub dose: f64,
    pub fire_entry: bool,
}

/// Seconds the rear pair must stay above the front pair to count as a
/// crossover.
pub const CROSSOVER_HOLD: f64 = 1.0;

pub fn summarize_reactive(sc: &Scenario, out: &CosimOutcome) -> ReactiveSummary {
    let fire = sc
        .fires
        .first()
        .map_or(DVec2::ZERO, |f| DVec2::new(f.center[0], f.center[1]));
    let (closest_time, closest_distance) = out
        .trajectory
        .iter()
        .map(|s| (s.stamp, s.position().distance(fire)))
        .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let front = |r: &crate::cosim::SensorLogRow| r.filtered[0] + r.filtered[1];
    let rear = |r: &crate::cosim::SensorLogRow| r.filtered[2] + r.filtered[3];
    let log = &out.sensor_log;
    let mut peak_corner = 0.0f64;
    let mut front_peak = (0.0, f64::NEG_INFINITY);
    for r in log {
        peak_corner = r.filtered.iter().copied().fold(peak_corner, f64::max);
        if front(r) > front_peak.1 {
            front_peak = (r.stamp, front(r));
        }
    }
    let mut crossover_time = None;
    let mut front_led = false;
    for (k, r) in log.iter().enumerate() {
        if front(r) > rear(r) {
            front_led = true;
            continue;
        }
        if !front_led || rear(r) <= front(r) {
            continue;
        }
        let held = log[k..]
            .iter()
            .take_while(|s| s.stamp - r.stamp <= CROSSOVER_HOLD)
            .all(|s| rear(s) > front(s));
        let covered = log
            .last()
            .is_some_and(|l| l.stamp - r.stamp >= CROSSOVER_HOLD);
        if held && covered {
            crossover_time = Some(r.stamp);
            break;
        }
    }
    let last = out.trajectory.last().map_or(sc.start(), |s| s.position());
    ReactiveSummary {
        reached_goal: out.reached_goal,
        final_goal_distance: last.distance(sc.goal()),
        peak_corner,
        front_peak_time: front_peak.0,
        closest_time,
        closest_distance,
        crossover_time,
        dose: out.dose,
        fire_entry: out.fire_entry,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub delay_ms: f64,
    pub dose: f64,
    pub peak_irradiance: f64,
    pub reached_goal: bool,
    pub fire_entry: bool,
    pub min_clearance: f64,
    pub elapsed: f64,
}

/// Reactive runs on one replayed fire with each injected delay.
pub fn latency_sweep(
    sc: &Scenario,
    tape: Arc<FireTape>,
    seed: u64,
    base: &ReactiveRun,
    delays_ms: &[f64],
) -> Result<Vec<LatencyRow>, SimError> {
    let mut rows = Vec::new();
    for &d in delays_ms {
        if !(d >= 0.0) {
            return Err(SimError::Config(format!("delay must be >= 0 ms, got {d}")));
        }
        let run = ReactiveRun {
            delay_ms: d,
            ..base.clone()
        };
        let out = run_reactive(sc, tape.clone(), seed, &run)?;
        rows.push(LatencyRow {
            delay_ms: d,
            dose: out.dose,
            peak_irradiance: out.peak_irradiance,
            reached_goal: out.reached_goal,
            fire_entry: out.fire_entry,
            min_clearance: out.min_clearance,
            elapsed: out.elapsed,
        });
    }
    Ok(rows)
}

pub fn write_latency_csv(path: &Path, rows: &[LatencyRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "delay_ms",
        "dose_kj_m2",
        "peak_kw_m2",
        "reached_goal",
        "fire_entry",
        "min_clearance_m",
        "elapsed_s",
    ])?;
    for r in rows {
        w.write_record([
            r.delay_ms.to_string(),
            format!("{:.6}", r.dose),
            format!("{:.6}", r.peak_irradiance),
            r.reached_goal.to_string(),
            r.fire_entry.to_string(),
            format!("{:.4}", r.min_clearance),
            format!("{:.2}", r.elapsed),
        ])?;
    }
    w.flush()
}
