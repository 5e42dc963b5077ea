//! Scenario descriptions: domain extent, scene boxes, fire sources, thermal
//! sensors, robot start/goal and every tunable parameter block.
//!
//! Scenarios are TOML files. `load_scenario` parses and validates them;
//! `builtin_scenarios` returns the experiment presets. The full schema is
//! documented in `docs/scenario-format.md`.

use std::collections::BTreeMap;
use std::path::Path;

use glam::{DVec2, DVec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmap::CostmapParams;
use crate::fire::{Boundary, SolverParams};
use crate::geometry::AxisBox;
use crate::radiation::RadiationParams;
use crate::robot::RobotParams;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown scenario `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FireSource {
    pub center: [f64; 3],
    pub radius: f64,
    /// kW
    pub heat_release_rate: f64,
    /// kg/s; derived from the heat release rate when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fuel_injection_rate: Option<f64>,
    /// K, pilot temperature held inside the source region.
    pub ignition_temperature: f64,
}

impl FireSource {
    pub fn center(&self) -> DVec3 {
        DVec3::from_array(self.center)
    }

    /// Fuel mass rate in kg/s.
    pub fn fuel_rate(&self, heat_of_combustion: f64) -> f64 {
        self.fuel_injection_rate
            .unwrap_or(self.heat_release_rate * 1e3 / heat_of_combustion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum SensorGeometry {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Cuboid {
        center: [f64; 3],
        half_extents: [f64; 3],
        #[serde(default)]
        yaw: f64,
    },
}

impl SensorGeometry {
    pub fn area(&self) -> f64 {
        match *self {
            SensorGeometry::Sphere { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
            SensorGeometry::Cuboid {
                half_extents: h, ..
            } => 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]),
        }
    }

    pub fn center(&self) -> DVec3 {
        match *self {
            SensorGeometry::Sphere { center, .. } | SensorGeometry::Cuboid { center, .. } => {
                DVec3::from_array(center)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub id: String,
    pub geometry: SensorGeometry,
    #[serde(default = "default_ema_alpha")]
    pub ema_alpha: f64,
    /// When set, `geometry.center` is an offset in the robot body frame
    /// (x forward, y left, z up from the ground) and `yaw` is relative.
    #[serde(default)]
    pub attached: bool,
}

fn default_ema_alpha() -> f64 {
    0.2
}

/// Spot chassis dimensions used for the cuboid dose sensor.
pub const SPOT_BODY: [f64; 3] = [1.1, 0.5, 0.191];
/// Height of the body center above the ground.
pub const BODY_HEIGHT: f64 = 0.5;

impl SensorSpec {
    /// The Spot-chassis cuboid preset (1.1 x 0.5 x 0.191 m, area ~1.71 m^2),
    /// attached to the robot body.
    pub fn spot_cuboid(id: &str) -> Self {
        SensorSpec {
            id: id.to_string(),
            geometry: SensorGeometry::Cuboid {
                center: [0.0, 0.0, BODY_HEIGHT],
                half_extents: [SPOT_BODY[0] / 2.0, SPOT_BODY[1] / 2.0, SPOT_BODY[2] / 2.0],
                yaw: 0.0,
            },
            ema_alpha: 0.25,
            attached: true,
        }
    }

    /// Four sphere sensors at the corners of the Spot bounding box, in the
    /// order FL, FR, RR, RL.
    pub fn corner_set(radius: f64, ema_alpha: f64) -> Vec<SensorSpec> {
        let hx = SPOT_BODY[0] / 2.0;
        let hy = SPOT_BODY[1] / 2.0;
        [
            ("FL", hx, hy),
            ("FR", hx, -hy),
            ("RR", -hx, -hy),
            ("RL", -hx, hy),
        ]
        .into_iter()
        .map(|(id, x, y)| SensorSpec {
            id: id.to_string(),
            geometry: SensorGeometry::Sphere {
                center: [x, y, BODY_HEIGHT],
                radius,
            },
            ema_alpha,
            attached: true,
        })
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub domain_size: [f64; 3],
    pub voxel_size: f64,
    pub robot_start: [f64; 2],
    pub robot_goal: [f64; 2],
    #[serde(default)]
    pub scene: Vec<AxisBox>,
    #[serde(default)]
    pub fires: Vec<FireSource>,
    #[serde(default)]
    pub sensors: Vec<SensorSpec>,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub radiation: RadiationParams,
    #[serde(default)]
    pub costmap: CostmapParams,
    #[serde(default)]
    pub robot: RobotParams,
}

impl Scenario {
    pub fn domain(&self) -> DVec3 {
        DVec3::from_array(self.domain_size)
    }

    pub fn start(&self) -> DVec2 {
        DVec2::from_array(self.robot_start)
    }

    pub fn goal(&self) -> DVec2 {
        DVec2::from_array(self.robot_goal)
    }

    /// Voxel counts per axis.
    pub fn grid_dims(&self) -> [usize; 3] {
        let d = self.domain_size;
        [0, 1, 2].map(|a| ((d[a] / self.voxel_size).round() as usize).max(1))
    }

    pub fn sensor(&self, id: &str) -> Option<&SensorSpec> {
        self.sensors.iter().find(|s| s.id == id)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let sc: Scenario = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            ScenarioError::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.voxel_size > 0.0) {
            return bad("voxel_size must be positive".into());
        }
        if self.domain_size.iter().any(|&d| !(d > 0.0)) {
            return bad("domain_size must be positive in every component".into());
        }
        let dom = self.domain();
        let eps = 1e-9;
        let inside = |p: DVec3| p.cmpge(DVec3::splat(-eps)).all() && p.cmple(dom + eps).all();
        for (i, b) in self.scene.iter().enumerate() {
            if !b.lo().cmplt(b.hi()).all() {
                return bad(format!(
                    "scene box {i}: min must be below max in every component"
                ));
            }
            if !inside(b.lo()) || !inside(b.hi()) {
                return bad(format!("scene box {i} lies outside the domain"));
            }
        }
        for (i, f) in self.fires.iter().enumerate() {
            if !(f.heat_release_rate > 0.0) {
                return bad(format!("fire {i}: heat_release_rate must be positive"));
            }
            if !(f.radius > 0.0) {
                return bad(format!("fire {i}: radius must be positive"));
            }
            if !inside(f.center()) {
                return bad(format!("fire {i} lies outside the domain"));
            }
        }
        for s in &self.sensors {
            if !(s.geometry.area() > 0.0) {
                return bad(format!("sensor {}: area must be positive", s.id));
            }
            if !(s.ema_alpha > 0.0 && s.ema_alpha <= 1.0) {
                return bad(format!("sensor {}: ema_alpha must lie in (0, 1]", s.id));
            }
        }
        for (label, p) in [("robot_start", self.start()), ("robot_goal", self.goal())] {
            if p.x < 0.0 || p.y < 0.0 || p.x > dom.x || p.y > dom.y {
                return bad(format!("{label} lies outside the domain"));
            }
        }
        let s = &self.solver;
        if !(s.cfl > 0.0 && s.cfl <= 1.0) {
            return bad("solver.cfl must lie in (0, 1]".into());
        }
        if s.pressure_iters < 1 {
            return bad("solver.pressure_iters must be at least 1".into());
        }
        if !(s.frame_dt > 0.0) {
            return bad("solver.frame_dt must be positive".into());
        }
        let r = &self.radiation;
        if !(0.0..=1.0).contains(&r.emissivity) {
            return bad("radiation.emissivity must lie in [0, 1]".into());
        }
        if r.particles_per_emitter_per_step < 1 {
            return bad("radiation.particles_per_emitter_per_step must be at least 1".into());
        }
        if !(r.particle_speed > 0.0) {
            return bad("radiation.particle_speed must be positive".into());
        }
        let c = &self.costmap;
        if !(c.resolution > 0.0) {
            return bad("costmap.resolution must be positive".into());
        }
        if !(c.irradiance_scale > 0.0) {
            return bad("costmap.irradiance_scale must be positive".into());
        }
        if c.window < 1 {
            return bad("costmap.window must be at least 1".into());
        }
        Ok(())
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_toml(&text)
}

/// Resolves a `--scenario` argument: a builtin name or a file path.
pub fn resolve(name_or_path: &str) -> Result<Scenario, ScenarioError> {
    if let Some(sc) = builtin_scenarios().remove(name_or_path) {
        return Ok(sc);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        return load_scenario(path);
    }
    Err(ScenarioError::Unknown(name_or_path.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FireSide {
    Left,
    Right,
}

impl FireSide {
    /// +1 for a fire left of the direction of travel.
    pub fn sign(self) -> f64 {
        match self {
            FireSide::Left => 1.0,
            FireSide::Right => -1.0,
        }
    }

    pub fn mirrored(self) -> FireSide {
        match self {
            FireSide::Left => FireSide::Right,
            FireSide::Right => FireSide::Left,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FireSide::Left => "left",
            FireSide::Right => "right",
        }
    }
}

impl std::str::FromStr for FireSide {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(FireSide::Left),
            "right" => Ok(FireSide::Right),
            other => Err(format!(
                "fire side must be `left` or `right`, got `{other}`"
            )),
        }
    }
}

fn fire(x: f64, y: f64, radius: f64, kw: f64) -> FireSource {
    FireSource {
        center: [x, y, 0.125],
        radius,
        heat_release_rate: kw,
        fuel_injection_rate: None,
        ignition_temperature: 1100.0,
    }
}

/// Small corner spheres need more particles than the ground grid to read
/// a usable lateral gradient.
fn corner_radiation() -> RadiationParams {
    RadiationParams {
        particles_per_emitter_per_step: 256,
        ..RadiationParams::default()
    }
}

/// Three fires of increasing intensity on the y = 5 m line of a walled
/// 20 x 10 m hall.
pub fn three_fires() -> Scenario {
    let mut solver = SolverParams::default();
    solver.side_boundary = Boundary::Wall;
    Scenario {
        name: "three_fires".into(),
        domain_size: [20.0, 10.0, 4.0],
        voxel_size: 0.25,
        robot_start: [16.0, 0.5],
        robot_goal: [10.0, 9.5],
        scene: Vec::new(),
        fires: vec![
            fire(4.0, 5.0, 0.5, 180.0),
            fire(11.5, 5.0, 0.5, 330.0),
            fire(15.0, 5.0, 0.6, 660.0),
        ],
        sensors: vec![SensorSpec::spot_cuboid("spot")],
        solver,
        radiation: RadiationParams::default(),
        costmap: CostmapParams {
            irradiance_scale: 2.0,
            ..CostmapParams::default()
        },
        robot: RobotParams::default(),
    }
}

/// 7 m straight-ahead task with one fire 2.5 m along the path, offset
/// 0.5 m to the given side.
pub fn bc_corridor(side: FireSide) -> Scenario {
    let start = [1.5, 3.0];
    let mut sensors = SensorSpec::corner_set(0.15, 0.3);
    sensors.push(SensorSpec::spot_cuboid("spot"));
    Scenario {
        name: format!("bc_corridor_{}", side.as_str()),
        domain_size: [10.0, 6.0, 3.0],
        voxel_size: 0.25,
        robot_start: start,
        robot_goal: [start[0] + 7.0, start[1]],
        scene: Vec::new(),
        fires: vec![fire(
            start[0] + 2.5,
            start[1] + 0.5 * side.sign(),
            0.25,
            40.0,
        )],
        sensors,
        solver: SolverParams::default(),
        radiation: corner_radiation(),
        costmap: CostmapParams::default(),
        robot: RobotParams::default(),
    }
}

/// Robot, fire and goal on one line across an open plane.
pub fn reactive_line() -> Scenario {
    let mut sensors = SensorSpec::corner_set(0.15, 0.3);
    sensors.push(SensorSpec::spot_cuboid("spot"));
    Scenario {
        name: "reactive_line".into(),
        domain_size: [16.0, 10.0, 3.0],
        voxel_size: 0.25,
        robot_start: [2.0, 5.0],
        robot_goal: [14.0, 5.0],
        scene: Vec::new(),
        fires: vec![fire(8.0, 5.0, 0.3, 60.0)],
        sensors,
        solver: SolverParams::default(),
        radiation: corner_radiation(),
        costmap: CostmapParams::default(),
        robot: RobotParams::default(),
    }
}

pub fn builtin_scenarios() -> BTreeMap<String, Scenario> {
    // `bc_corridor` is the left-side variant under its short name.
    let mut alias = bc_corridor(FireSide::Left);
    alias.name = "bc_corridor".into();
    [
        three_fires(),
        alias,
        bc_corridor(FireSide::Left),
        bc_corridor(FireSide::Right),
        reactive_line(),
    ]
    .into_iter()
    .map(|sc| (sc.name.clone(), sc))
    .collect()
}
