//! Command-line front end: scenarios in, reports and data files out.

pub mod frames;
pub mod report;
pub mod teleop;

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use emberlink::bc::{
    self, count_successes, demo_clearance, load_demos, median, read_model, record_demos,
    run_rollouts, save_demo, write_model, CorridorTapes, PipelineConfig, TrainConfig,
};
use emberlink::bridge::Direction;
use emberlink::cosim::{CosimObserver, FireDriver, ThermalWorld};
use emberlink::costmap::{render_overlay, Overlay, ThermalCostmap};
use emberlink::experiments::{
    latency_sweep, record_tape, run_baseline, run_full, run_reactive, run_weight_sweep,
    summarize_reactive, write_latency_csv, write_path_csv, write_sensor_log_csv,
    write_trajectory_csv, FullRunConfig, PathFollower, ReactiveRun, WeightSweepConfig,
};
use emberlink::planner::{lethal_mask, plan, PlanRequest, PlannedPath};
use emberlink::realtime::{Realtime, RealtimeConfig, Transport};
use emberlink::render::write_rgb_png;
use emberlink::scenario::{resolve, Scenario};

use frames::{FrameDumper, LastComposite};
use report::RunReport;

#[derive(Debug, Parser)]
#[command(
    name = "emberlink",
    version,
    about = "Fire and thermal-radiation co-simulation with a robot in the loop"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Builtin scenario name or path to a scenario TOML file.
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Costmap, plan and a followed path with the camera loop on.
    Run(RunArgs),
    /// Paths per heat weight and the dose table.
    Plan(PlanArgs),
    /// Reactive corner-sensor avoidance against a straight-line baseline.
    Reactive(ReactiveArgs),
    /// Reactive runs under injected delays.
    Latency(LatencyArgs),
    /// Behavioral cloning: record demos, train, roll out.
    Bc {
        #[command(subcommand)]
        cmd: BcCmd,
    },
    /// WebSocket teleoperation server with demo recording.
    TeleopServer(TeleopArgs),
    /// Lists the builtin scenarios or prints one as TOML.
    Scenarios {
        /// Print this scenario instead of the list.
        name: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value = "inproc")]
    pub transport: Transport,
    #[arg(long, default_value_t = 0.0)]
    pub delay_ms: f64,
    #[arg(long, default_value = "both")]
    pub delay_direction: Direction,
    /// Planner heat weight.
    #[arg(long, default_value_t = 5.0)]
    pub weight: f64,
    /// s of robot motion.
    #[arg(long, default_value_t = 30.0)]
    pub duration_s: f64,
    /// s of fire before the costmap window.
    #[arg(long, default_value_t = 3.0)]
    pub warmup: f64,
    /// Write rgb/depth/fire/composite PNGs and raw fire fields under `frames/`.
    #[arg(long)]
    pub dump_frames: bool,
    /// Fire-field dump stride in frames.
    #[arg(long, default_value_t = 20)]
    pub dump_every: u64,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,5,30")]
    pub weights: Vec<f64>,
    #[arg(long, default_value_t = 6.0)]
    pub warmup: f64,
}

#[derive(Debug, Args)]
pub struct ReactiveArgs {
    /// Irradiance that gives one unit of repulsion, kW/m^2.
    #[arg(long, default_value_t = 0.4)]
    pub qmax: f64,
    #[arg(long, default_value_t = 0.0)]
    pub delay_ms: f64,
    #[arg(long, default_value = "fire-to-robot")]
    pub delay_direction: Direction,
    #[arg(long, default_value_t = 30.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 6.0)]
    pub warmup: f64,
}

#[derive(Debug, Args)]
pub struct LatencyArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,500,1000,2000")]
    pub delays: Vec<f64>,
    #[arg(long, default_value_t = 0.4)]
    pub qmax: f64,
    #[arg(long, default_value = "fire-to-robot")]
    pub delay_direction: Direction,
    #[arg(long, default_value_t = 30.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 6.0)]
    pub warmup: f64,
}

#[derive(Debug, Subcommand)]
pub enum BcCmd {
    /// Scripted demos on both fire sides into `<out>/demos`.
    Record(BcRecordArgs),
    /// Trains a policy on a demo directory.
    Train(BcTrainArgs),
    /// Rolls a trained policy out on randomized trials.
    Rollout(BcRolloutArgs),
    /// Record, train and roll out in one go.
    Pipeline(BcPipelineArgs),
}

#[derive(Debug, Args)]
pub struct TapeArgs {
    /// s of fire before the tape starts.
    #[arg(long, default_value_t = 6.0)]
    pub warmup: f64,
    /// s of tape per fire side.
    #[arg(long, default_value_t = 30.0)]
    pub tape_s: f64,
    /// s per demo or rollout.
    #[arg(long, default_value_t = 15.0)]
    pub duration_s: f64,
}

#[derive(Debug, Args)]
pub struct BcRecordArgs {
    #[arg(long, default_value_t = 10)]
    pub per_side: usize,
    #[command(flatten)]
    pub tape: TapeArgs,
}

#[derive(Debug, Args)]
pub struct BcTrainArgs {
    /// Directory of demo CSVs.
    #[arg(long)]
    pub demos: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Skip mirrored copies of the training samples.
    #[arg(long)]
    pub no_mirror: bool,
    /// Seed for the split, initialization and batching.
    #[arg(long, default_value_t = 0)]
    pub train_seed: u64,
}

#[derive(Debug, Args)]
pub struct BcRolloutArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Demo directory giving the reference clearance for success.
    #[arg(long)]
    pub demos: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[command(flatten)]
    pub tape: TapeArgs,
}

#[derive(Debug, Args)]
pub struct BcPipelineArgs {
    #[arg(long, default_value_t = 10)]
    pub per_side: usize,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub train_seed: u64,
    #[command(flatten)]
    pub tape: TapeArgs,
}

#[derive(Debug, Args)]
pub struct TeleopArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Directory served at `/`; a built-in page is served when absent.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Where recorded demos go; defaults to `<out>/demos`.
    #[arg(long)]
    pub demos: Option<PathBuf>,
    /// Fire warm-up before the robot starts, s.
    #[arg(long, default_value_t = 2.0)]
    pub warmup: f64,
}

impl Common {
    fn scenario_or(&self, default: &str) -> anyhow::Result<Scenario> {
        let name = self.scenario.as_deref().unwrap_or(default);
        let sc = resolve(name).with_context(|| format!("resolving scenario `{name}`"))?;
        sc.validate()
            .with_context(|| format!("scenario `{name}`"))?;
        Ok(sc)
    }

    fn out_dir(&self) -> anyhow::Result<&Path> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    let t0 = Instant::now();
    let c = &cli.common;
    let report = match cli.command {
        Cmd::Run(a) => cmd_run(c, &a)?,
        Cmd::Plan(a) => cmd_plan(c, &a)?,
        Cmd::Reactive(a) => cmd_reactive(c, &a)?,
        Cmd::Latency(a) => cmd_latency(c, &a)?,
        Cmd::Bc { cmd } => cmd_bc(c, &cmd)?,
        Cmd::TeleopServer(a) => return cmd_teleop(c, &a),
        Cmd::Scenarios { name } => return cmd_scenarios(name.as_deref()),
    };
    report.write(&c.out, t0.elapsed().as_secs_f64())?;
    println!("{}", serde_json::to_string_pretty(&report.metrics)?);
    Ok(())
}

fn cmd_scenarios(name: Option<&str>) -> anyhow::Result<()> {
    match name {
        Some(n) => print!("{}", resolve(n)?.to_toml()),
        None => {
            for n in emberlink::scenario::builtin_scenarios().keys() {
                println!("{n}");
            }
        }
    }
    Ok(())
}

fn fire_overlays(sc: &Scenario) -> Vec<Overlay> {
    let mut o: Vec<Overlay> = sc
        .fires
        .iter()
        .map(|f| Overlay::Circle {
            center: [f.center[0], f.center[1]],
            radius: f.radius,
            color: [80, 160, 255],
        })
        .collect();
    o.push(Overlay::Marker {
        at: sc.robot_start,
        color: [0, 255, 0],
    });
    o.push(Overlay::Marker {
        at: sc.robot_goal,
        color: [0, 255, 255],
    });
    o
}

const PATH_COLORS: [[u8; 3]; 4] = [[255, 255, 255], [0, 200, 255], [60, 255, 60], [255, 0, 255]];

fn write_costmap(
    out: &Path,
    map: &ThermalCostmap,
    overlays: &[Overlay],
    files: &mut Vec<String>,
) -> anyhow::Result<()> {
    map.write_csv(&out.join("costmap.csv"))?;
    map.write_pgm(&out.join("costmap.pgm"))?;
    render_overlay(map, overlays, 4).save(out.join("costmap.png"))?;
    files.extend(["costmap.csv", "costmap.pgm", "costmap.png"].map(String::from));
    Ok(())
}

fn path_metrics(p: &PlannedPath) -> serde_json::Value {
    json!({"length_m": p.length, "cost": p.cost, "predicted_peak_kw_m2": p.predicted_peak})
}

fn cmd_run(c: &Common, a: &RunArgs) -> anyhow::Result<RunReport> {
    if a.duration_s <= 0.0 {
        bail!("--duration-s must be positive");
    }
    if a.delay_ms < 0.0 {
        bail!("--delay-ms must be >= 0");
    }
    let sc = c.scenario_or("three_fires")?;
    let out = c.out_dir()?;
    match a.transport {
        Transport::Inproc => run_inproc(c, a, &sc, out),
        Transport::Tcp => run_tcp(c, a, &sc, out),
    }
}

fn run_inproc(c: &Common, a: &RunArgs, sc: &Scenario, out: &Path) -> anyhow::Result<RunReport> {
    let cfg = FullRunConfig {
        warmup: a.warmup,
        weight: a.weight,
        timeout: a.duration_s,
        camera: true,
        delay_ms: a.delay_ms,
        delay_direction: a.delay_direction,
    };
    let mut dumper = if a.dump_frames {
        Some(FrameDumper::new(&out.join("frames"), a.dump_every)?)
    } else {
        None
    };
    let mut last = LastComposite::default();
    let observer: &mut dyn CosimObserver = match dumper.as_mut() {
        Some(d) => d,
        None => &mut last,
    };
    let run = run_full(sc, c.seed, &cfg, observer)?;
    let mut files = Vec::new();
    if let Some(d) = dumper {
        let n = d.finish()?;
        files.push(format!("frames/ ({n} files)"));
    }
    if let Some(img) = &last.0 {
        write_rgb_png(&out.join("composite.png"), img)?;
        files.push("composite.png".into());
    }
    let mut overlays = fire_overlays(sc);
    overlays.push(Overlay::Path {
        points: run.path.waypoints.clone(),
        color: PATH_COLORS[0],
    });
    overlays.push(Overlay::Path {
        points: run.outcome.trajectory.iter().map(|s| [s.x, s.y]).collect(),
        color: PATH_COLORS[1],
    });
    write_costmap(out, &run.costmap, &overlays, &mut files)?;
    write_path_csv(&out.join("path.csv"), &run.path)?;
    write_trajectory_csv(&out.join("trajectory.csv"), &run.outcome.trajectory)?;
    write_sensor_log_csv(&out.join("sensor_log.csv"), &run.outcome)?;
    files.extend(["path.csv", "trajectory.csv", "sensor_log.csv"].map(String::from));
    let o = &run.outcome;
    let mut r = RunReport::new("run", &sc.name, c.seed).counts(&o.message_counts);
    r.metrics = json!({
        "transport": "inproc",
        "weight": a.weight,
        "path": path_metrics(&run.path),
        "reached_goal": o.reached_goal,
        "elapsed_s": o.elapsed,
        "dose_kj_m2": o.dose,
        "peak_irradiance_kw_m2": o.peak_irradiance,
        "fire_entry": o.fire_entry,
        "min_clearance_m": o.min_clearance,
        "path_length_m": o.path_length,
        "composites": o.composites,
    });
    r.files = files;
    Ok(r)
}

/// Costmap and plan from a separate world with the same seed, then the
/// fire and robot loops in real time over loopback TCP.
fn run_tcp(c: &Common, a: &RunArgs, sc: &Scenario, out: &Path) -> anyhow::Result<RunReport> {
    let mut world = ThermalWorld::new(sc, FireDriver::live(sc, c.seed, a.warmup)?, c.seed);
    for _ in 0..sc.costmap.window {
        world.step(&[])?;
    }
    let costmap = world
        .costmap
        .average()
        .context("costmap window never filled")?;
    let lethal = (!sc.scene.is_empty()).then(|| lethal_mask(&costmap, &sc.scene));
    let path = plan(&PlanRequest {
        start: sc.start(),
        goal: sc.goal(),
        weight: a.weight,
        costmap: &costmap,
        lethal: lethal.as_deref(),
    })?;
    let cfg = RealtimeConfig {
        transport: Transport::Tcp,
        delay_ms: a.delay_ms,
        delay_direction: a.delay_direction,
        warmup: a.warmup,
        seed: c.seed,
        ..RealtimeConfig::new(a.duration_s)
    };
    let follower = PathFollower::new(&path, 0.5, sc.robot.speed);
    let rep = Realtime::start(sc, &cfg, Box::new(follower))?.join()?;
    let mut files = Vec::new();
    let mut overlays = fire_overlays(sc);
    overlays.push(Overlay::Path {
        points: path.waypoints.clone(),
        color: PATH_COLORS[0],
    });
    overlays.push(Overlay::Path {
        points: rep.robot.trajectory.iter().map(|s| [s.x, s.y]).collect(),
        color: PATH_COLORS[1],
    });
    write_costmap(out, &costmap, &overlays, &mut files)?;
    write_path_csv(&out.join("path.csv"), &path)?;
    write_trajectory_csv(&out.join("trajectory.csv"), &rep.robot.trajectory)?;
    files.extend(["path.csv", "trajectory.csv"].map(String::from));
    let ticks = rep.robot.tick_times.len();
    let stale = rep.robot.stale.iter().filter(|s| **s).count();
    let mut r = RunReport::new("run", &sc.name, c.seed).counts(&rep.message_counts);
    r.metrics = json!({
        "transport": "tcp",
        "weight": a.weight,
        "path": path_metrics(&path),
        "reached_goal": rep.robot.reached_goal,
        "ticks": ticks,
        "stale_ticks": stale,
        "mean_tick_period_s": rep.mean_period(0.0, f64::INFINITY),
        "fire_frames": rep.fire.frames,
        "dose_kj_m2": rep.fire.dose,
        "peak_irradiance_kw_m2": rep.fire.peak_irradiance,
        "composites": rep.robot.composites,
        "clock_offset_s": rep.clock_offset,
    });
    r.files = files;
    Ok(r)
}

fn cmd_plan(c: &Common, a: &PlanArgs) -> anyhow::Result<RunReport> {
    let sc = c.scenario_or("three_fires")?;
    let out = c.out_dir()?;
    let cfg = WeightSweepConfig {
        weights: a.weights.clone(),
        warmup: a.warmup,
        ..WeightSweepConfig::for_scenario(&sc)
    };
    let t = run_weight_sweep(&sc, c.seed, &cfg)?;
    let mut files = Vec::new();
    let mut overlays = fire_overlays(&sc);
    let mut rows = Vec::new();
    for (k, row) in t.rows.iter().enumerate() {
        let name = format!("path_w{}.csv", row.weight);
        write_path_csv(&out.join(&name), &row.path)?;
        files.push(name);
        overlays.push(Overlay::Path {
            points: row.path.waypoints.clone(),
            color: PATH_COLORS[k % PATH_COLORS.len()],
        });
        rows.push(json!({
            "weight": row.weight,
            "distance_m": row.distance,
            "cost": row.cost,
            "dose_kj_m2": row.dose,
            "peak_irradiance_kw_m2": row.peak_irradiance,
            "predicted_peak_kw_m2": row.predicted_peak,
        }));
    }
    t.write_dose_csv(&out.join("dose.csv"))?;
    files.push("dose.csv".into());
    write_costmap(out, &t.costmap, &overlays, &mut files)?;
    let mut r = RunReport::new("plan", &sc.name, c.seed);
    r.metrics = json!({ "rows": rows });
    r.files = files;
    Ok(r)
}

fn reactive_run(
    qmax: f64,
    delay_ms: f64,
    direction: Direction,
    timeout: f64,
) -> anyhow::Result<ReactiveRun> {
    if !(qmax > 0.0) {
        bail!("--qmax must be positive");
    }
    let mut run = ReactiveRun {
        delay_ms,
        delay_direction: direction,
        timeout,
        ..ReactiveRun::default()
    };
    run.reactive.q_max = qmax;
    Ok(run)
}

fn cmd_reactive(c: &Common, a: &ReactiveArgs) -> anyhow::Result<RunReport> {
    let sc = c.scenario_or("reactive_line")?;
    let out = c.out_dir()?;
    let run = reactive_run(a.qmax, a.delay_ms, a.delay_direction, a.duration_s)?;
    let tape = Arc::new(record_tape(&sc, c.seed, a.warmup, a.duration_s)?);
    let reactive = run_reactive(&sc, tape.clone(), c.seed, &run)?;
    let baseline = run_baseline(&sc, tape, c.seed, &run)?;
    let mut files = Vec::new();
    for (name, o) in [("reactive", &reactive), ("baseline", &baseline)] {
        write_trajectory_csv(&out.join(format!("{name}_trajectory.csv")), &o.trajectory)?;
        write_sensor_log_csv(&out.join(format!("{name}_sensors.csv")), o)?;
        files.push(format!("{name}_trajectory.csv"));
        files.push(format!("{name}_sensors.csv"));
    }
    let mut r = RunReport::new("reactive", &sc.name, c.seed).counts(&reactive.message_counts);
    r.metrics = json!({
        "q_max": a.qmax,
        "delay_ms": a.delay_ms,
        "reactive": summarize_reactive(&sc, &reactive),
        "baseline": summarize_reactive(&sc, &baseline),
    });
    r.files = files;
    Ok(r)
}

fn cmd_latency(c: &Common, a: &LatencyArgs) -> anyhow::Result<RunReport> {
    let sc = c.scenario_or("reactive_line")?;
    let out = c.out_dir()?;
    if a.delays.is_empty() {
        bail!("--delays is empty");
    }
    let run = reactive_run(a.qmax, 0.0, a.delay_direction, a.duration_s)?;
    let tape = Arc::new(record_tape(&sc, c.seed, a.warmup, a.duration_s)?);
    let rows = latency_sweep(&sc, tape, c.seed, &run, &a.delays)?;
    write_latency_csv(&out.join("latency.csv"), &rows)?;
    let mut r = RunReport::new("latency", &sc.name, c.seed);
    r.metrics = json!({ "direction": a.delay_direction, "rows": rows });
    r.files = vec!["latency.csv".into()];
    Ok(r)
}

fn pipeline_config(
    t: &TapeArgs,
    per_side: usize,
    trials: usize,
    train_seed: u64,
) -> PipelineConfig {
    PipelineConfig {
        demos_per_side: per_side,
        trials,
        warmup: t.warmup,
        tape_length: t.tape_s,
        timeout: t.duration_s,
        train: TrainConfig {
            seed: train_seed,
            ..TrainConfig::default()
        },
    }
}

fn record_tapes(seed: u64, cfg: &PipelineConfig) -> anyhow::Result<CorridorTapes> {
    if cfg.tape_length < cfg.timeout {
        bail!("--tape-s must be at least --duration-s");
    }
    Ok(CorridorTapes::record(seed, cfg.warmup, cfg.tape_length)?)
}

fn write_rollouts_csv(path: &Path, rollouts: &[bc::RolloutOutcome]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "trial",
        "side",
        "tape_offset",
        "reached_goal",
        "fire_entry",
        "min_clearance_m",
        "dose_kj_m2",
        "elapsed_s",
        "max_lateral_m",
    ])?;
    for (k, r) in rollouts.iter().enumerate() {
        w.write_record([
            k.to_string(),
            r.trial.side.as_str().to_string(),
            r.trial.tape_offset.to_string(),
            r.reached_goal.to_string(),
            r.fire_entry.to_string(),
            format!("{:.4}", r.min_clearance),
            format!("{:.6}", r.dose),
            format!("{:.2}", r.elapsed),
            format!("{:.4}", r.max_lateral),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn rollout_metrics(rollouts: &[bc::RolloutOutcome], reference: Option<f64>) -> serde_json::Value {
    let ratio = 0.8;
    json!({
        "trials": rollouts.len(),
        "reached_goal": rollouts.iter().filter(|r| r.reached_goal).count(),
        "fire_entries": rollouts.iter().filter(|r| r.fire_entry).count(),
        "reference_clearance_m": reference,
        "clearance_ratio": ratio,
        "successes": reference.map(|c| count_successes(rollouts, c, ratio)),
    })
}

fn cmd_bc(c: &Common, cmd: &BcCmd) -> anyhow::Result<RunReport> {
    let out = c.out_dir()?;
    let seed = c.seed;
    let mut r = RunReport::new("bc", "bc_corridor", seed);
    match cmd {
        BcCmd::Record(a) => {
            let cfg = pipeline_config(&a.tape, a.per_side, 0, 0);
            let demos = record_demos(&record_tapes(seed, &cfg)?, &cfg, seed)?;
            let dir = out.join("demos");
            for d in &demos {
                let p = save_demo(&dir, d)?;
                r.files.push(format!(
                    "demos/{}",
                    p.file_name().unwrap().to_string_lossy()
                ));
            }
            r.command = "bc record".into();
            r.metrics = json!({
                "demos": demos.len(),
                "valid": demos.iter().filter(|d| d.valid).count(),
                "min_clearance_m": demos.iter().map(|d| d.min_clearance).collect::<Vec<_>>(),
            });
        }
        BcCmd::Train(a) => {
            let demos = load_demos(&a.demos)
                .with_context(|| format!("loading demos from {}", a.demos.display()))?;
            let cfg = TrainConfig {
                epochs: a.epochs,
                mirror: !a.no_mirror,
                seed: a.train_seed,
                ..TrainConfig::default()
            };
            let (net, rep) = bc::train(&demos, &cfg)?;
            write_model(&out.join("model.bin"), &net)?;
            fs::write(
                out.join("train_report.json"),
                serde_json::to_string_pretty(&rep)? + "\n",
            )?;
            r.command = "bc train".into();
            r.files = vec!["model.bin".into(), "train_report.json".into()];
            r.metrics = json!({
                "demos": demos.len(),
                "train_samples": rep.train_samples,
                "val_samples": rep.val_samples,
                "final_train_loss": rep.train_loss.last(),
                "final_val_loss": rep.val_loss.last(),
                "baseline_val_loss": rep.baseline_val_loss,
                "r2": rep.r2,
            });
        }
        BcCmd::Rollout(a) => {
            let net =
                read_model(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
            let reference = match &a.demos {
                Some(dir) => {
                    let mut clear: Vec<f64> = load_demos(dir)?
                        .iter()
                        .map(|d| {
                            demo_clearance(&emberlink::scenario::bc_corridor(d.side), &d.samples)
                        })
                        .collect();
                    Some(median(&mut clear))
                }
                None => None,
            };
            let cfg = pipeline_config(&a.tape, 0, a.trials, 0);
            let rollouts = run_rollouts(&record_tapes(seed, &cfg)?, &net, &cfg, seed)?;
            write_rollouts_csv(&out.join("rollouts.csv"), &rollouts)?;
            r.command = "bc rollout".into();
            r.files = vec!["rollouts.csv".into()];
            r.metrics = rollout_metrics(&rollouts, reference);
        }
        BcCmd::Pipeline(a) => {
            let cfg = pipeline_config(&a.tape, a.per_side, a.trials, a.train_seed);
            let rep = bc::run_pipeline(&record_tapes(seed, &cfg)?, &cfg, seed)?;
            let dir = out.join("demos");
            for d in &rep.demos {
                save_demo(&dir, d)?;
            }
            if let Some(net) = &rep.net {
                write_model(&out.join("model.bin"), net)?;
            }
            fs::write(
                out.join("train_report.json"),
                serde_json::to_string_pretty(&rep.train)? + "\n",
            )?;
            write_rollouts_csv(&out.join("rollouts.csv"), &rep.rollouts)?;
            r.command = "bc pipeline".into();
            r.files = ["demos/", "model.bin", "train_report.json", "rollouts.csv"]
                .map(String::from)
                .to_vec();
            let mut m = rollout_metrics(&rep.rollouts, Some(rep.demo_median_clearance));
            m["demos"] = json!(rep.demos.len());
            m["valid_demos"] = json!(rep.demos.iter().filter(|d| d.valid).count());
            m["r2"] = json!(rep.train.r2);
            r.metrics = m;
        }
    }
    Ok(r)
}

fn cmd_teleop(c: &Common, a: &TeleopArgs) -> anyhow::Result<()> {
    let sc = c.scenario_or("bc_corridor_left")?;
    let cfg = teleop::TeleopConfig {
        demos: a.demos.clone().unwrap_or_else(|| c.out.join("demos")),
        static_dir: a.static_dir.clone(),
        warmup: a.warmup,
        seed: c.seed,
        ..teleop::TeleopConfig::new(sc)
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.bind).await?;
        log::info!(
            "teleop server on http://{}/ (socket /teleop)",
            listener.local_addr()?
        );
        teleop::serve(listener, cfg).await
    })
}
