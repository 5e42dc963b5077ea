//! Behavioral cloning of a steering policy from demonstrations.
//!
//! Demonstrations come from a scripted operator (or the teleop server)
//! driving `bc_corridor`. Each sample holds the four filtered corner
//! readings, the world-frame offset to the goal and the steering angle in
//! degrees, positive to the left of the start-goal axis. The policy is a
//! 6-64-64-1 MLP with ReLU hidden layers and a tanh output scaled by 90.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use glam::DVec2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cosim::{
    fire_clearance, run_cosim, substream, ControlInput, Controller, CosimConfig, CosimOutcome,
    FireDriver, FireTape, SimError, ThermalWorld,
};
use crate::experiments::body_sensor;
use crate::reactive::ReactiveConfig;
use crate::robot::{Command, RobotState};
use crate::scenario::{bc_corridor, FireSide, Scenario};

pub const FEATURES: usize = 6;
pub const HIDDEN: usize = 64;
/// Largest steering magnitude a policy returns, degrees.
pub const MAX_STEERING: f64 = 90.0 - 1e-9;

#[derive(Debug, Error)]
pub enum BcError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset too small: {0}")]
    TooSmall(String),
    #[error("training diverged at epoch {0}")]
    Diverged(usize),
    #[error("bad model file: {0}")]
    Model(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoSample {
    /// s
    pub stamp: f64,
    /// FL, FR, RR, RL filtered irradiance, kW/m^2.
    pub q: [f64; 4],
    /// Goal minus robot position, world frame, m.
    pub dx: f64,
    pub dy: f64,
    /// Degrees in [-90, 90], positive to the left.
    pub steering: f64,
    pub side: FireSide,
}

impl DemoSample {
    pub fn features(&self) -> [f64; FEATURES] {
        [self.q[0], self.q[1], self.q[2], self.q[3], self.dx, self.dy]
    }

    /// Reflection across the start-goal axis (for an axis along x).
    pub fn mirrored(&self) -> DemoSample {
        DemoSample {
            q: [self.q[1], self.q[0], self.q[3], self.q[2]],
            dy: -self.dy,
            steering: -self.steering,
            side: self.side.mirrored(),
            ..*self
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DemoRow {
    stamp: f64,
    q_fl: f64,
    q_fr: f64,
    q_rr: f64,
    q_rl: f64,
    dx: f64,
    dy: f64,
    steering: f64,
    side: String,
}

pub fn write_demo_csv(path: &Path, samples: &[DemoSample]) -> Result<(), BcError> {
    let mut w = csv::Writer::from_path(path)?;
    for s in samples {
        w.serialize(DemoRow {
            stamp: s.stamp,
            q_fl: s.q[0],
            q_fr: s.q[1],
            q_rr: s.q[2],
            q_rl: s.q[3],
            dx: s.dx,
            dy: s.dy,
            steering: s.steering,
            side: s.side.as_str().to_string(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_demo_csv(path: &Path) -> Result<Vec<DemoSample>, BcError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize::<DemoRow>() {
        let row = row?;
        let side = row
            .side
            .parse()
            .map_err(|e: String| BcError::TooSmall(format!("{}: {e}", path.display())))?;
        if !(-90.0..=90.0).contains(&row.steering) {
            return Err(BcError::TooSmall(format!(
                "{}: steering {} outside [-90, 90]",
                path.display(),
                row.steering
            )));
        }
        out.push(DemoSample {
            stamp: row.stamp,
            q: [row.q_fl, row.q_fr, row.q_rr, row.q_rl],
            dx: row.dx,
            dy: row.dy,
            steering: row.steering,
            side,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    pub name: String,
    pub side: FireSide,
    pub samples: Vec<DemoSample>,
    /// Reached the goal without entering the fire.
    pub valid: bool,
    /// Smallest distance from the robot center to the source edge, m.
    pub min_clearance: f64,
}

/// Suffix of demo files that must not be trained on.
pub const INVALID_SUFFIX: &str = ".invalid.csv";

/// Writes `demo` as `<dir>/<name>.csv`, or with [`INVALID_SUFFIX`].
pub fn save_demo(dir: &Path, demo: &Demo) -> Result<PathBuf, BcError> {
    fs::create_dir_all(dir)?;
    let file = if demo.valid {
        format!("{}.csv", demo.name)
    } else {
        format!("{}{INVALID_SUFFIX}", demo.name)
    };
    let path = dir.join(file);
    write_demo_csv(&path, &demo.samples)?;
    Ok(path)
}

/// Valid, non-empty demos of a directory in file-name order.
pub fn load_demos(dir: &Path) -> Result<Vec<Demo>, BcError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".csv") && !name.ends_with(INVALID_SUFFIX)
        })
        .collect();
    paths.sort();
    let mut demos = Vec::new();
    for p in paths {
        let samples = read_demo_csv(&p)?;
        let Some(first) = samples.first() else {
            continue;
        };
        demos.push(Demo {
            name: p.file_stem().unwrap().to_string_lossy().into_owned(),
            side: first.side,
            samples,
            valid: true,
            min_clearance: f64::NAN,
        });
    }
    Ok(demos)
}

/// Start-goal axis of a scenario: origin, unit direction.
pub fn task_axis(sc: &Scenario) -> (DVec2, DVec2) {
    (sc.start(), (sc.goal() - sc.start()).normalize())
}

/// World heading for a steering angle relative to the task axis.
pub fn steering_heading(axis: DVec2, steering_deg: f64) -> f64 {
    axis.to_angle() + steering_deg.to_radians()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorParams {
    /// Lateral offset held abreast of the fire, m.
    pub amplitude: f64,
    /// Half-length of the avoidance maneuver along the axis, m.
    pub half_length: f64,
    /// Lateral tracking gain, 1/m.
    pub gain: f64,
    /// Stationary std of the steering noise, degrees.
    pub noise: f64,
    /// Noise correlation per sample.
    pub noise_corr: f64,
}

impl Default for OperatorParams {
    fn default() -> Self {
        OperatorParams {
            amplitude: 1.1,
            half_length: 2.0,
            gain: 1.5,
            noise: 3.0,
            noise_corr: 0.9,
        }
    }
}

/// Scripted operator: knows where the fire is and swerves around it on
/// the far side along a smooth bump, returning to the axis afterwards.
pub struct ScriptedOperator {
    pub params: OperatorParams,
    origin: DVec2,
    axis: DVec2,
    /// Fire position along the axis and to its left, m.
    fire_s: f64,
    fire_l: f64,
    rng: ChaCha8Rng,
    noise: f64,
    last: f64,
}

impl ScriptedOperator {
    pub fn new(sc: &Scenario, params: OperatorParams, seed: u64) -> Self {
        let (origin, axis) = task_axis(sc);
        let f = sc
            .fires
            .first()
            .map_or(sc.goal(), |f| DVec2::new(f.center[0], f.center[1]));
        let rel = f - origin;
        ScriptedOperator {
            params,
            origin,
            axis,
            fire_s: rel.dot(axis),
            fire_l: axis.perp().dot(rel),
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise: 0.0,
            last: 0.0,
        }
    }

    /// Desired lateral offset and its slope at axis position `s`.
    fn target(&self, s: f64) -> (f64, f64) {
        let x = (s - self.fire_s) / self.params.half_length;
        if x.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let away = -self.fire_l.signum();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let c = (half_pi * x).cos();
        let l = away * self.params.amplitude * c * c;
        let dl = -away * self.params.amplitude * 2.0 * c * (half_pi * x).sin() * half_pi
            / self.params.half_length;
        (l, dl)
    }

    /// Steering for the robot at `p`, degrees; advances the noise once.
    pub fn steer(&mut self, p: DVec2) -> f64 {
        let rel = p - self.origin;
        let s = rel.dot(self.axis);
        let l = self.axis.perp().dot(rel);
        let (lt, dlt) = self.target(s);
        let clean = (dlt + self.params.gain * (lt - l)).atan().to_degrees();
        let rho = self.params.noise_corr;
        let e: f64 = self.rng.random::<f64>() * 2.0 - 1.0;
        // uniform innovations scaled to the stationary std
        self.noise =
            rho * self.noise + (1.0 - rho * rho).sqrt() * self.params.noise * 3f64.sqrt() * e;
        self.last = (clean + self.noise).clamp(-90.0, 90.0);
        self.last
    }
}

/// Wraps a steering source into a controller that drives at fixed speed
/// in the steered direction, body kept along the task axis, and logs
/// samples at `rate_hz`.
pub struct SteeringRecorder<S> {
    pub source: S,
    pub speed: f64,
    pub rate_hz: f64,
    pub ids: ReactiveConfig,
    pub side: FireSide,
    pub axis: DVec2,
    pub samples: Vec<DemoSample>,
    next_sample: f64,
    steering: f64,
}

/// Anything that can produce a steering angle from what the robot sees.
pub trait SteeringSource {
    fn steering(&mut self, input: &ControlInput, q: [f64; 4]) -> f64;
}

impl SteeringSource for ScriptedOperator {
    fn steering(&mut self, input: &ControlInput, _q: [f64; 4]) -> f64 {
        self.steer(input.state.position())
    }
}

impl<S: SteeringSource> SteeringRecorder<S> {
    pub fn new(source: S, sc: &Scenario, side: FireSide, rate_hz: f64) -> Self {
        SteeringRecorder {
            source,
            speed: sc.robot.speed,
            rate_hz,
            ids: ReactiveConfig::default(),
            side,
            axis: task_axis(sc).1,
            samples: Vec::new(),
            next_sample: 0.0,
            steering: 0.0,
        }
    }
}

impl<S: SteeringSource> Controller for SteeringRecorder<S> {
    fn command(&mut self, input: &ControlInput) -> Command {
        if input.now >= self.next_sample - 1e-9 {
            let q = input.readings.map_or([0.0; 4], |r| self.ids.pick(r));
            self.steering = self.source.steering(input, q);
            let d = input.goal - input.state.position();
            self.samples.push(DemoSample {
                stamp: input.now,
                q,
                dx: d.x,
                dy: d.y,
                steering: self.steering,
                side: self.side,
            });
            self.next_sample += 1.0 / self.rate_hz;
        }
        let dir = DVec2::from_angle(steering_heading(self.axis, self.steering));
        Command::Velocity {
            vx: self.speed * dir.x,
            vy: self.speed * dir.y,
        }
    }
}

/// Corner sensors for the readings, the body cuboid for the dose.
pub fn corridor_cosim_config(sc: &Scenario, timeout: f64) -> CosimConfig {
    let ids = ReactiveConfig::default().sensor_ids;
    let mut cfg = CosimConfig::for_scenario(sc);
    cfg.sensors = ids.iter().filter_map(|id| sc.sensor(id).cloned()).collect();
    cfg.truth = body_sensor(sc);
    cfg.timeout = timeout;
    cfg.goal_tolerance = Some(0.5);
    cfg
}

fn start_state(sc: &Scenario) -> RobotState {
    RobotState::at(sc.start(), task_axis(sc).1.to_angle())
}

/// Where a corridor run starts in a fire tape, and its radiation seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub side: FireSide,
    pub tape_offset: usize,
    pub seed: u64,
}

fn corridor_world(sc: &Scenario, tape: &Arc<FireTape>, trial: &Trial) -> ThermalWorld {
    ThermalWorld::new(
        sc,
        FireDriver::replay_from(tape.clone(), trial.tape_offset),
        trial.seed,
    )
}

fn remaining(tape: &FireTape, trial: &Trial, timeout: f64) -> f64 {
    let left = tape.frames.len().saturating_sub(trial.tape_offset) as f64 * tape.frame_dt;
    timeout.min(left)
}

pub fn record_demo(
    sc: &Scenario,
    tape: &Arc<FireTape>,
    trial: &Trial,
    operator: OperatorParams,
    name: &str,
    timeout: f64,
) -> Result<Demo, SimError> {
    let cfg = corridor_cosim_config(sc, remaining(tape, trial, timeout));
    let mut world = corridor_world(sc, tape, trial);
    let op = ScriptedOperator::new(sc, operator, substream(trial.seed, 11));
    let mut rec = SteeringRecorder::new(op, sc, trial.side, 20.0);
    let out = run_cosim(sc, &mut world, &mut rec, start_state(sc), &cfg)?;
    Ok(Demo {
        name: name.to_string(),
        side: trial.side,
        valid: out.reached_goal && !out.fire_entry && !rec.samples.is_empty(),
        samples: rec.samples,
        min_clearance: out.min_clearance,
    })
}

/// Standardization statistics per feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; FEATURES],
    pub std: [f64; FEATURES],
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer {
            mean: [0.0; FEATURES],
            std: [1.0; FEATURES],
        }
    }

    pub fn fit(rows: &[[f64; FEATURES]]) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = [0.0; FEATURES];
        let mut std = [0.0; FEATURES];
        for r in rows {
            for j in 0..FEATURES {
                mean[j] += r[j] / n;
            }
        }
        for r in rows {
            for j in 0..FEATURES {
                std[j] += (r[j] - mean[j]).powi(2) / n;
            }
        }
        Normalizer {
            mean,
            std: std.map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }),
        }
    }

    pub fn apply(&self, x: &[f64; FEATURES]) -> [f64; FEATURES] {
        std::array::from_fn(|j| (x[j] - self.mean[j]) / self.std[j])
    }
}

/// Dense layer, row-major `rows x cols` weights (`rows` outputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    /// Uniform Glorot initialization.
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let mut l = Layer::zeros(rows, cols);
        for w in &mut l.w {
            *w = rng.random_range(-a..a);
        }
        l
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.w[i * self.cols..(i + 1) * self.cols];
            *o = self.b[i] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub layers: [Layer; 3],
    pub norm: Normalizer,
}

struct Activations {
    z1: [f64; HIDDEN],
    a1: [f64; HIDDEN],
    z2: [f64; HIDDEN],
    a2: [f64; HIDDEN],
    y: f64,
}

impl PolicyNet {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PolicyNet {
            layers: [
                Layer::glorot(HIDDEN, FEATURES, &mut rng),
                Layer::glorot(HIDDEN, HIDDEN, &mut rng),
                Layer::glorot(1, HIDDEN, &mut rng),
            ],
            norm: Normalizer::identity(),
        }
    }

    fn activations(&self, x: &[f64; FEATURES]) -> Activations {
        let xn = self.norm.apply(x);
        let mut act = Activations {
            z1: [0.0; HIDDEN],
            a1: [0.0; HIDDEN],
            z2: [0.0; HIDDEN],
            a2: [0.0; HIDDEN],
            y: 0.0,
        };
        self.layers[0].forward(&xn, &mut act.z1);
        act.a1 = act.z1.map(|z| z.max(0.0));
        self.layers[1].forward(&act.a1, &mut act.z2);
        act.a2 = act.z2.map(|z| z.max(0.0));
        let mut z3 = [0.0];
        self.layers[2].forward(&act.a2, &mut z3);
        act.y = z3[0].tanh();
        act
    }

    /// Network output in [-1, 1].
    pub fn forward(&self, x: &[f64; FEATURES]) -> f64 {
        self.activations(x).y
    }
}

/// Steering in degrees, strictly inside (-90, 90).
pub fn infer(net: &PolicyNet, q: [f64; 4], dx: f64, dy: f64) -> f64 {
    (90.0 * net.forward(&[q[0], q[1], q[2], q[3], dx, dy])).clamp(-MAX_STEERING, MAX_STEERING)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch: usize,
    pub epochs: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Also train on every training sample reflected across the x axis.
    /// Only meaningful for tasks laid out along x.
    pub mirror: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch: 64,
            epochs: 200,
            validation_fraction: 0.2,
            seed: 0,
            mirror: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Validation MSE of predicting the training-label mean.
    pub baseline_val_loss: f64,
    /// `1 - val / baseline` on the final epoch.
    pub r2: f64,
    pub train_demos: Vec<String>,
    pub val_demos: Vec<String>,
    pub train_samples: usize,
    pub val_samples: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [&mut f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (k, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * g;
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * g * g;
            **p -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

fn param_refs(net: &mut PolicyNet) -> Vec<&mut f64> {
    let mut out = Vec::new();
    for l in net.layers.iter_mut() {
        out.extend(l.w.iter_mut());
        out.extend(l.b.iter_mut());
    }
    out
}

/// Accumulates the MSE gradient of one sample into `g` (same layout as
/// [`param_refs`]), returning the squared error.
fn backprop(net: &PolicyNet, x: &[f64; FEATURES], target: f64, scale: f64, g: &mut [f64]) -> f64 {
    let act = net.activations(x);
    let xn = net.norm.apply(x);
    let err = act.y - target;
    let dz3 = scale * 2.0 * err * (1.0 - act.y * act.y);
    let [l1, l2, l3] = &net.layers;
    let o1 = 0;
    let o2 = o1 + l1.w.len() + l1.b.len();
    let o3 = o2 + l2.w.len() + l2.b.len();
    // output layer
    let mut da2 = [0.0; HIDDEN];
    for j in 0..HIDDEN {
        g[o3 + j] += dz3 * act.a2[j];
        da2[j] = dz3 * l3.w[j];
    }
    g[o3 + l3.w.len()] += dz3;
    // second hidden
    let dz2: [f64; HIDDEN] = std::array::from_fn(|i| if act.z2[i] > 0.0 { da2[i] } else { 0.0 });
    let mut da1 = [0.0; HIDDEN];
    for i in 0..HIDDEN {
        if dz2[i] == 0.0 {
            continue;
        }
        let row = i * HIDDEN;
        for j in 0..HIDDEN {
            g[o2 + row + j] += dz2[i] * act.a1[j];
            da1[j] += dz2[i] * l2.w[row + j];
        }
        g[o2 + l2.w.len() + i] += dz2[i];
    }
    // first hidden
    for i in 0..HIDDEN {
        if act.z1[i] <= 0.0 {
            continue;
        }
        let d = da1[i];
        let row = i * FEATURES;
        for j in 0..FEATURES {
            g[o1 + row + j] += d * xn[j];
        }
        g[o1 + l1.w.len() + i] += d;
    }
    err * err
}

fn mse(net: &PolicyNet, rows: &[([f64; FEATURES], f64)]) -> f64 {
    if rows.is_empty() {
        return f64::NAN;
    }
    rows.iter()
        .map(|(x, t)| (net.forward(x) - t).powi(2))
        .sum::<f64>()
        / rows.len() as f64
}

fn to_rows(demos: &[&Demo]) -> Vec<([f64; FEATURES], f64)> {
    demos
        .iter()
        .flat_map(|d| d.samples.iter().map(|s| (s.features(), s.steering / 90.0)))
        .collect()
}

/// Splits whole demos into training and validation, keeping both fire
/// sides in each part when possible.
pub fn split_demos<'a>(
    demos: &'a [Demo],
    fraction: f64,
    seed: u64,
) -> (Vec<&'a Demo>, Vec<&'a Demo>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for side in [FireSide::Left, FireSide::Right] {
        let mut group: Vec<&Demo> = demos.iter().filter(|d| d.side == side).collect();
        group.shuffle(&mut rng);
        let n_val = if group.len() >= 2 {
            ((group.len() as f64 * fraction).round() as usize).clamp(1, group.len() - 1)
        } else {
            0
        };
        val.extend(group.drain(..n_val));
        train.extend(group);
    }
    (train, val)
}

/// Trains a policy; deterministic given the demos and `cfg.seed`.
pub fn train(demos: &[Demo], cfg: &TrainConfig) -> Result<(PolicyNet, TrainReport), BcError> {
    for side in [FireSide::Left, FireSide::Right] {
        let n = demos
            .iter()
            .filter(|d| d.side == side && !d.samples.is_empty())
            .count();
        if n < 2 {
            return Err(BcError::TooSmall(format!(
                "{n} demos with the fire {}, need 2",
                side.as_str()
            )));
        }
    }
    let (train_d, val_d) = split_demos(demos, cfg.validation_fraction, substream(cfg.seed, 21));
    let mut train_rows = to_rows(&train_d);
    if cfg.mirror {
        let extra: Vec<_> = train_d
            .iter()
            .flat_map(|d| d.samples.iter().map(|s| s.mirrored()))
            .map(|s| (s.features(), s.steering / 90.0))
            .collect();
        train_rows.extend(extra);
    }
    let val_rows = to_rows(&val_d);
    if train_rows.is_empty() {
        return Err(BcError::TooSmall("no training samples".into()));
    }
    let mut net = PolicyNet::new(substream(cfg.seed, 22));
    let feats: Vec<[f64; FEATURES]> = train_rows.iter().map(|r| r.0).collect();
    net.norm = Normalizer::fit(&feats);
    let n_params: usize = net.layers.iter().map(|l| l.w.len() + l.b.len()).sum();
    let mut adam = Adam::new(n_params);
    let mut rng = ChaCha8Rng::seed_from_u64(substream(cfg.seed, 23));
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    let mut g = vec![0.0; n_params];
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        baseline_val_loss: f64::NAN,
        r2: f64::NAN,
        train_demos: train_d.iter().map(|d| d.name.clone()).collect(),
        val_demos: val_d.iter().map(|d| d.name.clone()).collect(),
        train_samples: train_rows.len(),
        val_samples: val_rows.len(),
    };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch.max(1)) {
            g.iter_mut().for_each(|v| *v = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &k in batch {
                let (x, t) = &train_rows[k];
                total += backprop(&net, x, *t, scale, &mut g);
            }
            adam.step(&mut param_refs(&mut net), &g, cfg.learning_rate);
        }
        let train_loss = total / train_rows.len() as f64;
        if !train_loss.is_finite() {
            return Err(BcError::Diverged(epoch));
        }
        report.train_loss.push(train_loss);
        report.val_loss.push(mse(&net, &val_rows));
    }
    let mean = train_rows.iter().map(|r| r.1).sum::<f64>() / train_rows.len() as f64;
    if !val_rows.is_empty() {
        report.baseline_val_loss =
            val_rows.iter().map(|r| (r.1 - mean).powi(2)).sum::<f64>() / val_rows.len() as f64;
        report.r2 =
            1.0 - report.val_loss.last().copied().unwrap_or(f64::NAN) / report.baseline_val_loss;
    }
    Ok((net, report))
}

const MODEL_MAGIC: &[u8; 4] = b"EMBC";
const MODEL_VERSION: u32 = 1;

/// Model file, little endian: magic `EMBC`, version u32, layer count u32,
/// then per layer `rows u32, cols u32`, then per layer the row-major
/// weights followed by the biases as f64, then the feature means and
/// standard deviations (6 f64 each).
pub fn write_model(path: &Path, net: &PolicyNet) -> io::Result<()> {
    let mut b = Vec::new();
    b.extend_from_slice(MODEL_MAGIC);
    b.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    b.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for l in &net.layers {
        b.extend_from_slice(&(l.rows as u32).to_le_bytes());
        b.extend_from_slice(&(l.cols as u32).to_le_bytes());
    }
    for l in &net.layers {
        for v in l.w.iter().chain(&l.b) {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in net.norm.mean.iter().chain(&net.norm.std) {
        b.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&b)
}

pub fn read_model(path: &Path) -> Result<PolicyNet, BcError> {
    let mut b = Vec::new();
    fs::File::open(path)?.read_to_end(&mut b)?;
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8], BcError> {
        let s = b
            .get(at..at + n)
            .ok_or_else(|| BcError::Model("truncated".into()))?;
        at += n;
        Ok(s)
    };
    if take(4)? != MODEL_MAGIC {
        return Err(BcError::Model("bad magic".into()));
    }
    let u32_of = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap()) as usize;
    let version = u32_of(take(4)?);
    if version != MODEL_VERSION as usize {
        return Err(BcError::Model(format!("unsupported version {version}")));
    }
    let n = u32_of(take(4)?);
    let expected = [(HIDDEN, FEATURES), (HIDDEN, HIDDEN), (1, HIDDEN)];
    if n != expected.len() {
        return Err(BcError::Model(format!("{n} layers, expected 3")));
    }
    for &(r, c) in &expected {
        let (rows, cols) = (u32_of(take(4)?), u32_of(take(4)?));
        if (rows, cols) != (r, c) {
            return Err(BcError::Model(format!(
                "layer {rows}x{cols}, expected {r}x{c}"
            )));
        }
    }
    let mut f64s = |n: usize| -> Result<Vec<f64>, BcError> {
        Ok(take(8 * n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let mut layers = expected.map(|(r, c)| Layer::zeros(r, c));
    for l in &mut layers {
        l.w = f64s(l.rows * l.cols)?;
        l.b = f64s(l.rows)?;
    }
    let mean = f64s(FEATURES)?.try_into().unwrap();
    let std = f64s(FEATURES)?.try_into().unwrap();
    if at != b.len() {
        return Err(BcError::Model(format!("{} trailing bytes", b.len() - at)));
    }
    Ok(PolicyNet {
        layers,
        norm: Normalizer { mean, std },
    })
}

/// Policy as a steering source.
pub struct PolicySteering<'a> {
    pub net: &'a PolicyNet,
}

impl SteeringSource for PolicySteering<'_> {
    fn steering(&mut self, input: &ControlInput, q: [f64; 4]) -> f64 {
        let d = input.goal - input.state.position();
        infer(self.net, q, d.x, d.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutOutcome {
    pub trial: Trial,
    pub reached_goal: bool,
    pub fire_entry: bool,
    /// m
    pub min_clearance: f64,
    /// kJ/m^2
    pub dose: f64,
    /// s
    pub elapsed: f64,
    /// Largest lateral distance from the task axis, m.
    pub max_lateral: f64,
    pub samples: Vec<DemoSample>,
    #[serde(skip)]
    pub cosim: Option<CosimOutcome>,
}

pub fn rollout(
    sc: &Scenario,
    tape: &Arc<FireTape>,
    trial: &Trial,
    net: &PolicyNet,
    timeout: f64,
) -> Result<RolloutOutcome, SimError> {
    let cfg = corridor_cosim_config(sc, remaining(tape, trial, timeout));
    let mut world = corridor_world(sc, tape, trial);
    let mut rec = SteeringRecorder::new(PolicySteering { net }, sc, trial.side, 20.0);
    let out = run_cosim(sc, &mut world, &mut rec, start_state(sc), &cfg)?;
    let (origin, axis) = task_axis(sc);
    let max_lateral = out
        .trajectory
        .iter()
        .map(|s| axis.perp().dot(s.position() - origin).abs())
        .fold(0.0, f64::max);
    Ok(RolloutOutcome {
        trial: *trial,
        reached_goal: out.reached_goal,
        fire_entry: out.fire_entry,
        min_clearance: out.min_clearance,
        dose: out.dose,
        elapsed: out.elapsed,
        max_lateral,
        samples: rec.samples,
        cosim: Some(out),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub demos_per_side: usize,
    pub trials: usize,
    /// s of fire before the tape starts.
    pub warmup: f64,
    /// s of tape per side.
    pub tape_length: f64,
    /// s per run.
    pub timeout: f64,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            demos_per_side: 10,
            trials: 20,
            warmup: 6.0,
            tape_length: 30.0,
            timeout: 15.0,
            train: TrainConfig::default(),
        }
    }
}

/// One fire tape per side, shared by every demo and rollout on that side.
pub struct CorridorTapes {
    pub left: (Scenario, Arc<FireTape>),
    pub right: (Scenario, Arc<FireTape>),
}

impl CorridorTapes {
    pub fn record(seed: u64, warmup: f64, length: f64) -> Result<Self, SimError> {
        let make = |side: FireSide, tag: u64| -> Result<(Scenario, Arc<FireTape>), SimError> {
            let sc = bc_corridor(side);
            let frames = (length / sc.solver.frame_dt).ceil() as usize;
            let tape = FireTape::record(&sc, substream(seed, tag), warmup, frames)?;
            Ok((sc, Arc::new(tape)))
        };
        Ok(CorridorTapes {
            left: make(FireSide::Left, 31)?,
            right: make(FireSide::Right, 32)?,
        })
    }

    pub fn side(&self, side: FireSide) -> &(Scenario, Arc<FireTape>) {
        match side {
            FireSide::Left => &self.left,
            FireSide::Right => &self.right,
        }
    }
}

/// Random start offsets into the tape and radiation seeds, alternating
/// fire sides.
pub fn draw_trials(n: usize, tape_frames: usize, timeout_frames: usize, seed: u64) -> Vec<Trial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = tape_frames.saturating_sub(timeout_frames).max(1);
    (0..n)
        .map(|k| Trial {
            side: if k % 2 == 0 {
                FireSide::Left
            } else {
                FireSide::Right
            },
            tape_offset: rng.random_range(0..span),
            seed: rng.random(),
        })
        .collect()
}

/// Operator parameters with per-demo variation.
pub fn draw_operator(rng: &mut impl Rng) -> OperatorParams {
    OperatorParams {
        amplitude: rng.random_range(0.95..1.3),
        half_length: rng.random_range(1.7..2.3),
        ..OperatorParams::default()
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Smallest distance from the robot center to the source edge over a
/// demo's recorded positions.
pub fn demo_clearance(sc: &Scenario, demo: &[DemoSample]) -> f64 {
    demo.iter()
        .map(|s| fire_clearance(sc, sc.goal() - DVec2::new(s.dx, s.dy)))
        .fold(f64::INFINITY, f64::min)
}

/// Everything one pass of demos, training and rollouts produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub demos: Vec<Demo>,
    pub train: TrainReport,
    pub rollouts: Vec<RolloutOutcome>,
    /// m
    pub demo_median_clearance: f64,
    /// Rollouts that reached the goal without entering the fire and kept
    /// at least `clearance_ratio` of the demo median clearance.
    pub successes: usize,
    pub clearance_ratio: f64,
    #[serde(skip)]
    pub net: Option<PolicyNet>,
}

/// Scripted demos on randomized trials, alternating fire sides, named
/// `demo_NN_<side>`.
pub fn record_demos(
    tapes: &CorridorTapes,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Vec<Demo>, SimError> {
    let (tape_frames, run_frames) = trial_frames(tapes, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, 41));
    let demo_trials = draw_trials(
        2 * cfg.demos_per_side,
        tape_frames,
        run_frames,
        substream(seed, 42),
    );
    let mut demos = Vec::new();
    for (k, trial) in demo_trials.iter().enumerate() {
        let (sc, tape) = tapes.side(trial.side);
        let name = format!("demo_{k:02}_{}", trial.side.as_str());
        demos.push(record_demo(
            sc,
            tape,
            trial,
            draw_operator(&mut rng),
            &name,
            cfg.timeout,
        )?);
    }
    Ok(demos)
}

/// Policy rollouts on fresh randomized trials, disjoint from the demo
/// draws of the same seed.
pub fn run_rollouts(
    tapes: &CorridorTapes,
    net: &PolicyNet,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Vec<RolloutOutcome>, SimError> {
    let (tape_frames, run_frames) = trial_frames(tapes, cfg);
    draw_trials(cfg.trials, tape_frames, run_frames, substream(seed, 44))
        .iter()
        .map(|trial| {
            let (sc, tape) = tapes.side(trial.side);
            rollout(sc, tape, trial, net, cfg.timeout)
        })
        .collect()
}

fn trial_frames(tapes: &CorridorTapes, cfg: &PipelineConfig) -> (usize, usize) {
    let tape_frames = tapes.left.1.frames.len().min(tapes.right.1.frames.len());
    (
        tape_frames,
        (cfg.timeout / tapes.left.1.frame_dt).ceil() as usize,
    )
}

/// Rollouts that reached the goal without entering the fire and kept at
/// least `ratio` of the reference clearance.
pub fn count_successes(rollouts: &[RolloutOutcome], reference_clearance: f64, ratio: f64) -> usize {
    rollouts
        .iter()
        .filter(|r| {
            r.reached_goal && !r.fire_entry && r.min_clearance >= ratio * reference_clearance
        })
        .count()
}

/// Records demos, trains on the valid ones and rolls the policy out on
/// fresh randomized trials.
pub fn run_pipeline(
    tapes: &CorridorTapes,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<PipelineReport, BcError> {
    let demos = record_demos(tapes, cfg, seed)?;
    let valid: Vec<Demo> = demos.iter().filter(|d| d.valid).cloned().collect();
    let (net, train) = train(&valid, &cfg.train)?;
    let mut clear: Vec<f64> = valid.iter().map(|d| d.min_clearance).collect();
    let demo_median_clearance = median(&mut clear);
    let clearance_ratio = 0.8;
    let rollouts = run_rollouts(tapes, &net, cfg, seed)?;
    let successes = count_successes(&rollouts, demo_median_clearance, clearance_ratio);
    Ok(PipelineReport {
        demos,
        train,
        rollouts,
        demo_median_clearance,
        successes,
        clearance_ratio,
        net: Some(net),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(k: usize, side: FireSide, steering: f64) -> DemoSample {
        let t = k as f64 * 0.05;
        DemoSample {
            stamp: t,
            q: [0.1 * t, 0.05 * t, 0.02, 0.01],
            dx: 7.0 - t,
            dy: 0.1 * (t * 3.0).sin(),
            steering,
            side,
        }
    }

    fn demo(name: &str, side: FireSide, f: impl Fn(usize) -> f64) -> Demo {
        Demo {
            name: name.into(),
            side,
            samples: (0..100).map(|k| sample(k, side, f(k))).collect(),
            valid: true,
            min_clearance: 1.0,
        }
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let s: Vec<_> = (0..7)
            .map(|k| sample(k, FireSide::Right, -12.345678901234567))
            .collect();
        write_demo_csv(&p, &s).unwrap();
        assert_eq!(read_demo_csv(&p).unwrap(), s);
        let header = fs::read_to_string(&p).unwrap();
        assert!(header.starts_with("stamp,q_fl,q_fr,q_rr,q_rl,dx,dy,steering,side\n"));
    }

    #[test]
    fn invalid_and_empty_demos_are_not_loaded() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = demo("a", FireSide::Left, |_| 1.0);
        save_demo(dir.path(), &d).unwrap();
        d.name = "b".into();
        d.valid = false;
        save_demo(dir.path(), &d).unwrap();
        write_demo_csv(&dir.path().join("c.csv"), &[]).unwrap();
        let loaded = load_demos(dir.path()).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].name, "a");
    }

    #[test]
    fn zero_final_layer_gives_zero_steering() {
        let mut net = PolicyNet::new(3);
        net.layers[2] = Layer::zeros(1, HIDDEN);
        assert_eq!(infer(&net, [0.0; 4], 0.0, 0.0), 0.0);
    }

    #[test]
    fn saturated_output_stays_inside_range() {
        let mut net = PolicyNet::new(3);
        net.layers[2].b[0] = 1e3;
        let s = infer(&net, [0.0; 4], 0.0, 0.0);
        assert!(s < 90.0 && s > 89.0);
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        let mut net = PolicyNet::new(9);
        net.norm.mean = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        write_model(&p, &net).unwrap();
        assert_eq!(read_model(&p).unwrap(), net);
        let len = fs::metadata(&p).unwrap().len() as usize;
        let params = 64 * 6 + 64 + 64 * 64 + 64 + 64 + 1;
        assert_eq!(len, 4 + 4 + 4 + 3 * 8 + 8 * params + 8 * 12);
        fs::write(&p, &fs::read(&p).unwrap()[..len - 1]).unwrap();
        assert!(read_model(&p).is_err());
    }

    #[test]
    fn constant_zero_labels_fit() {
        let demos: Vec<Demo> = (0..4)
            .map(|k| {
                demo(
                    &format!("d{k}"),
                    if k % 2 == 0 {
                        FireSide::Left
                    } else {
                        FireSide::Right
                    },
                    |_| 0.0,
                )
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 60,
            ..TrainConfig::default()
        };
        let (net, _) = train(&demos, &cfg).unwrap();
        for d in &demos {
            for s in &d.samples {
                assert!(infer(&net, s.q, s.dx, s.dy).abs() < 2.0);
            }
        }
    }

    #[test]
    fn training_is_reproducible_and_learns() {
        let f = |k: usize| 40.0 * (k as f64 * 0.05 * 3.0).sin();
        let demos: Vec<Demo> = (0..6)
            .map(|k| {
                demo(
                    &format!("d{k}"),
                    if k < 3 {
                        FireSide::Left
                    } else {
                        FireSide::Right
                    },
                    f,
                )
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 40,
            seed: 5,
            mirror: false,
            ..TrainConfig::default()
        };
        let (a, ra) = train(&demos, &cfg).unwrap();
        let (b, rb) = train(&demos, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.val_loss.last(), rb.val_loss.last());
        assert!(ra.train_loss.last().unwrap() < &(0.5 * ra.train_loss[0]));
    }

    #[test]
    fn too_few_demos_is_an_error() {
        let demos = vec![
            demo("a", FireSide::Left, |_| 0.0),
            demo("b", FireSide::Right, |_| 0.0),
        ];
        assert!(matches!(
            train(&demos, &TrainConfig::default()),
            Err(BcError::TooSmall(_))
        ));
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut net = PolicyNet::new(4);
        net.norm = Normalizer {
            mean: [0.1, 0.0, 0.0, 0.0, 3.0, 0.0],
            std: [0.2, 0.3, 0.1, 0.1, 2.0, 0.5],
        };
        let x = [0.3, 0.1, 0.05, 0.02, 4.0, -0.3];
        let t = 0.4;
        let n: usize = net.layers.iter().map(|l| l.w.len() + l.b.len()).sum();
        let mut g = vec![0.0; n];
        backprop(&net, &x, t, 1.0, &mut g);
        let loss = |net: &PolicyNet| (net.forward(&x) - t).powi(2);
        for k in [0, 5, 383, 384, 400, 448 + 64 * 64 - 1, n - 2, n - 1] {
            let mut p = net.clone();
            let h = 1e-6;
            *param_refs(&mut p)[k] += h;
            let up = loss(&p);
            *param_refs(&mut p)[k] -= 2.0 * h;
            let down = loss(&p);
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - g[k]).abs() < 1e-6 * (1.0 + fd.abs()),
                "param {k}: {fd} vs {}",
                g[k]
            );
        }
    }

    #[test]
    fn operator_swerves_away_then_back() {
        let sc = bc_corridor(FireSide::Left);
        let mut op = ScriptedOperator::new(
            &sc,
            OperatorParams {
                noise: 0.0,
                ..OperatorParams::default()
            },
            1,
        );
        let (origin, axis) = task_axis(&sc);
        // on the axis, approaching the fire: steer right (negative)
        let early = op.steer(origin + axis * 1.2);
        assert!(early < -5.0, "{early}");
        // past the fire, held out to the right: steer back left
        let late = op.steer(origin + axis * 3.6 - axis.perp() * 0.8);
        assert!(late > 5.0, "{late}");
        assert_eq!(op.steer(origin + axis * 6.5), 0.0);
    }

    #[test]
    fn mirrored_sample_flips_lateral_quantities() {
        let s = sample(30, FireSide::Left, 25.0);
        let m = s.mirrored();
        assert_eq!(m.q, [s.q[1], s.q[0], s.q[3], s.q[2]]);
        assert_eq!(
            (m.dx, m.dy, m.steering, m.side),
            (s.dx, -s.dy, -25.0, FireSide::Right)
        );
        assert_eq!(m.mirrored(), s);
    }

    proptest! {
        #[test]
        fn inference_is_bounded(q in proptest::array::uniform4(-1e3..1e3f64), dx in -1e3..1e3f64,
                                dy in -1e3..1e3f64, seed in 0u64..50) {
            let s = infer(&PolicyNet::new(seed), q, dx, dy);
            prop_assert!(s > -90.0 && s < 90.0);
        }
    }
}
