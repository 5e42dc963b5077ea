//! Thermal radiation carried by discrete energy particles.
//!
//! Hot voxels emit particles whose total energy follows the Stefan-Boltzmann
//! law and whose directions follow Lambert's cosine law about the face they
//! leave from. Particles fly at a fixed speed until they hit scene geometry,
//! a sensor, the ground plane, leave the domain or exceed the maximum range.

use std::f64::consts::PI;

use glam::{DQuat, DVec2, DVec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fire::FireGrid;
use crate::geometry::{ray_aabb, ray_aabb_exit, ray_obb, ray_sphere, AxisBox};
use crate::scenario::{Scenario, SensorGeometry, SensorSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadiationParams {
    /// W/(m^2 K^4)
    pub sigma: f64,
    pub emissivity: f64,
    /// Voxels at or below this temperature (K) do not emit.
    pub emission_threshold: f64,
    pub particles_per_emitter_per_step: usize,
    /// m/s
    pub particle_speed: f64,
    /// m
    pub max_range: f64,
    /// Resolve every particle within the step it was emitted in.
    pub instantaneous: bool,
}

impl Default for RadiationParams {
    fn default() -> Self {
        Self {
            sigma: 5.670374419e-8,
            emissivity: 0.3,
            emission_threshold: 500.0,
            particles_per_emitter_per_step: 64,
            particle_speed: 50.0,
            max_range: 40.0,
            instantaneous: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiationParticle {
    pub position: DVec3,
    pub direction: DVec3,
    /// J
    pub energy: f64,
    pub alive: bool,
    /// Path length flown so far, m.
    pub traveled: f64,
}

/// Radiant power leaving one emitter face, W.
pub fn emitter_power(temperature: f64, face_area: f64, params: &RadiationParams) -> f64 {
    params.emissivity * params.sigma * temperature.powi(4) * face_area
}

fn mix(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent stream per (seed, step, voxel).
fn emitter_rng(seed: u64, step: u64, voxel: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        mix(mix(seed ^ 0x7261_6469) ^ step) ^ (voxel as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    )
}

/// Cosine-weighted direction about `normal` from two uniform numbers.
pub fn lambert_direction(normal: DVec3, u1: f64, u2: f64) -> DVec3 {
    let cos_t = (1.0 - u1).sqrt();
    let sin_t = u1.sqrt();
    let phi = 2.0 * PI * u2;
    let (a, b) = normal.any_orthonormal_pair();
    (normal * cos_t + a * (sin_t * phi.cos()) + b * (sin_t * phi.sin())).normalize()
}

const FACE_NORMALS: [DVec3; 6] = [
    DVec3::NEG_X,
    DVec3::X,
    DVec3::NEG_Y,
    DVec3::Y,
    DVec3::NEG_Z,
    DVec3::Z,
];

/// A fluid voxel above the emission threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HotVoxel {
    pub id: usize,
    pub center: [f64; 3],
    /// K
    pub temperature: f64,
}

/// Every fluid voxel hotter than the emission threshold, in index order.
pub fn hot_voxels(grid: &FireGrid, params: &RadiationParams) -> Vec<HotVoxel> {
    (0..grid.len())
        .filter(|&id| !grid.solid[id] && grid.temperature[id] > params.emission_threshold)
        .map(|id| {
            let [i, j, k] = grid.coords(id);
            HotVoxel {
                id,
                center: grid.cell_center(i, j, k).to_array(),
                temperature: grid.temperature[id],
            }
        })
        .collect()
}

/// Emits particles from every fluid voxel hotter than the threshold.
/// Each emitter radiates `eps sigma T^4 h^2 dt` joules split evenly over
/// its particles; particle `n` leaves through face `(offset + n) mod 6` at a
/// uniform point, with the polar angle stratified over the emitter's
/// particles.
pub fn emit(
    grid: &FireGrid,
    params: &RadiationParams,
    dt: f64,
    seed: u64,
    step: u64,
) -> Vec<RadiationParticle> {
    emit_from(&hot_voxels(grid, params), grid.h, params, dt, seed, step)
}

/// [`emit`] over an explicit emitter list with voxel size `h`.
pub fn emit_from(
    hot: &[HotVoxel],
    h: f64,
    params: &RadiationParams,
    dt: f64,
    seed: u64,
    step: u64,
) -> Vec<RadiationParticle> {
    let n = params.particles_per_emitter_per_step.max(1);
    let mut out = Vec::with_capacity(hot.len() * n);
    for v in hot {
        let energy = emitter_power(v.temperature, h * h, params) * dt / n as f64;
        let center = DVec3::from_array(v.center);
        let mut rng = emitter_rng(seed, step, v.id);
        let offset = rng.random_range(0..6usize);
        for p in 0..n {
            let face = (offset + p) % 6;
            let normal = FACE_NORMALS[face];
            let (a, b) = normal.any_orthonormal_pair();
            let on_face = center
                + normal * (0.5 * h)
                + a * (h * (rng.random::<f64>() - 0.5))
                + b * (h * (rng.random::<f64>() - 0.5));
            let u1 = (p as f64 + rng.random::<f64>()) / n as f64;
            let direction = lambert_direction(normal, u1, rng.random());
            out.push(RadiationParticle {
                position: on_face,
                direction,
                energy,
                alive: true,
                traveled: 0.0,
            });
        }
    }
    out
}

/// Where every joule emitted so far has gone.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub emitted: f64,
    pub sensors: f64,
    pub solids: f64,
    pub ground: f64,
    pub exited: f64,
    pub in_flight: f64,
}

impl EnergyLedger {
    /// Relative mismatch between emitted energy and its destinations.
    pub fn imbalance(&self) -> f64 {
        let accounted = self.sensors + self.solids + self.ground + self.exited + self.in_flight;
        if self.emitted == 0.0 {
            accounted.abs()
        } else {
            (self.emitted - accounted).abs() / self.emitted
        }
    }
}

/// Ground-plane accumulation raster (z = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundGrid {
    pub origin: DVec2,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// J deposited per cell since the last reset.
    pub energy: Vec<f64>,
}

impl GroundGrid {
    pub fn new(origin: DVec2, resolution: f64, width: usize, height: usize) -> Self {
        Self {
            origin,
            resolution,
            width,
            height,
            energy: vec![0.0; width * height],
        }
    }

    /// Covers the scenario floor at the costmap resolution.
    pub fn for_scenario(sc: &Scenario) -> Self {
        let r = sc.costmap.resolution;
        let w = (sc.domain_size[0] / r).ceil() as usize;
        let h = (sc.domain_size[1] / r).ceil() as usize;
        Self::new(DVec2::ZERO, r, w, h)
    }

    pub fn cell(&self, p: DVec2) -> Option<usize> {
        let q = (p - self.origin) / self.resolution;
        if q.x < 0.0 || q.y < 0.0 {
            return None;
        }
        let (i, j) = (q.x as usize, q.y as usize);
        (i < self.width && j < self.height).then(|| j * self.width + i)
    }

    /// Irradiance per cell in kW/m^2 for energy gathered over `dt`, then
    /// clears the accumulator.
    pub fn take_irradiance(&mut self, dt: f64) -> Vec<f64> {
        let area = self.resolution * self.resolution;
        let out = self
            .energy
            .iter()
            .map(|e| e / (area * dt) / 1000.0)
            .collect();
        self.energy.iter_mut().for_each(|e| *e = 0.0);
        out
    }
}

/// Static geometry a particle can terminate on.
#[derive(Debug, Clone, Copy)]
pub struct Surroundings<'a> {
    pub scene: &'a [AxisBox],
    pub domain_lo: DVec3,
    pub domain_hi: DVec3,
}

enum Hit {
    Solid,
    Sensor(usize),
    Ground,
    Exit,
}

fn sensor_hit(g: &SensorGeometry, origin: DVec3, dir: DVec3) -> Option<f64> {
    match *g {
        SensorGeometry::Sphere { center, radius } => {
            ray_sphere(origin, dir, DVec3::from_array(center), radius)
        }
        SensorGeometry::Cuboid {
            center,
            half_extents,
            yaw,
        } => ray_obb(
            origin,
            dir,
            DVec3::from_array(center),
            DVec3::from_array(half_extents),
            DQuat::from_rotation_z(yaw),
        ),
    }
}

/// Moves every live particle one step (or to termination in instantaneous
/// mode) and deposits absorbed energy. `sensor_energy[i]` and the ground
/// raster receive joules; the ledger receives every termination.
#[allow(clippy::too_many_arguments)]
pub fn advance_and_collect(
    particles: &mut Vec<RadiationParticle>,
    world: &Surroundings,
    sensors: &[SensorGeometry],
    params: &RadiationParams,
    dt: f64,
    sensor_energy: &mut [f64],
    ground: &mut GroundGrid,
    ledger: &mut EnergyLedger,
) {
    let step_len = if params.instantaneous {
        f64::INFINITY
    } else {
        params.particle_speed * dt
    };
    for p in particles.iter_mut().filter(|p| p.alive) {
        let reach = step_len.min(params.max_range - p.traveled).max(0.0);
        let (o, d) = (p.position, p.direction);
        let mut best = (f64::INFINITY, Hit::Exit);
        for b in world.scene {
            if let Some(t) = ray_aabb(o, d, b.lo(), b.hi()) {
                if t < best.0 {
                    best = (t, Hit::Solid);
                }
            }
        }
        for (i, g) in sensors.iter().enumerate() {
            if let Some(t) = sensor_hit(g, o, d) {
                if t < best.0 {
                    best = (t, Hit::Sensor(i));
                }
            }
        }
        if d.z < 0.0 {
            let t = (-o.z / d.z).max(0.0);
            if t < best.0 {
                best = (t, Hit::Ground);
            }
        }
        let t_exit = ray_aabb_exit(o, d, world.domain_lo, world.domain_hi);
        if t_exit < best.0 {
            best = (t_exit, Hit::Exit);
        }
        let (t, hit) = best;
        if t > reach {
            p.position = o + d * reach;
            p.traveled += reach;
            if p.traveled >= params.max_range {
                p.alive = false;
                ledger.exited += p.energy;
            }
            continue;
        }
        p.alive = false;
        match hit {
            Hit::Solid => ledger.solids += p.energy,
            Hit::Sensor(i) => {
                sensor_energy[i] += p.energy;
                ledger.sensors += p.energy;
            }
            Hit::Ground => {
                let at = o + d * t;
                if let Some(c) = ground.cell(at.truncate()) {
                    ground.energy[c] += p.energy;
                }
                ledger.ground += p.energy;
            }
            Hit::Exit => ledger.exited += p.energy,
        }
    }
    particles.retain(|p| p.alive);
    ledger.in_flight = particles.iter().map(|p| p.energy).sum();
}

/// Energy gathered during one transport step.
#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    /// J per sensor, in the order the sensors were passed.
    pub sensor_energy: Vec<f64>,
    /// kW/m^2 per ground cell.
    pub ground_irradiance: Vec<f64>,
}

/// Particle population persisting across fire frames.
#[derive(Debug, Clone)]
pub struct RadiationTransport {
    pub params: RadiationParams,
    pub particles: Vec<RadiationParticle>,
    pub ledger: EnergyLedger,
    pub ground: GroundGrid,
    scene: Vec<AxisBox>,
    domain_hi: DVec3,
    seed: u64,
    step: u64,
}

impl RadiationTransport {
    pub fn new(sc: &Scenario, seed: u64) -> Self {
        Self {
            params: sc.radiation.clone(),
            particles: Vec::new(),
            ledger: EnergyLedger::default(),
            ground: GroundGrid::for_scenario(sc),
            scene: sc.scene.clone(),
            domain_hi: sc.domain(),
            seed,
            step: 0,
        }
    }

    /// Emits from `grid`, advances all particles by `dt` and returns what
    /// the sensors (world-placed) and the ground collected.
    pub fn step(&mut self, grid: &FireGrid, sensors: &[SensorGeometry], dt: f64) -> Collection {
        let hot = hot_voxels(grid, &self.params);
        self.step_from(&hot, grid.h, sensors, dt)
    }

    /// [`RadiationTransport::step`] with the emitters given explicitly.
    pub fn step_from(
        &mut self,
        hot: &[HotVoxel],
        h: f64,
        sensors: &[SensorGeometry],
        dt: f64,
    ) -> Collection {
        let fresh = emit_from(hot, h, &self.params, dt, self.seed, self.step);
        self.ledger.emitted += fresh.iter().map(|p| p.energy).sum::<f64>();
        self.particles.extend(fresh);
        let mut sensor_energy = vec![0.0; sensors.len()];
        let world = Surroundings {
            scene: &self.scene,
            domain_lo: DVec3::ZERO,
            domain_hi: self.domain_hi,
        };
        advance_and_collect(
            &mut self.particles,
            &world,
            sensors,
            &self.params,
            dt,
            &mut sensor_energy,
            &mut self.ground,
            &mut self.ledger,
        );
        self.step += 1;
        Collection {
            sensor_energy,
            ground_irradiance: self.ground.take_irradiance(dt),
        }
    }
}

/// Planar robot pose used to place attached sensors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    pub fn position(&self) -> DVec2 {
        DVec2::new(self.x, self.y)
    }
}

/// World placement of a sensor; unattached sensors are already in world
/// coordinates.
pub fn sensor_world_pose(spec: &SensorSpec, robot: Pose2) -> SensorGeometry {
    if !spec.attached {
        return spec.geometry;
    }
    let (s, c) = robot.yaw.sin_cos();
    let place = |l: [f64; 3]| {
        [
            robot.x + c * l[0] - s * l[1],
            robot.y + s * l[0] + c * l[1],
            l[2],
        ]
    };
    match spec.geometry {
        SensorGeometry::Sphere { center, radius } => SensorGeometry::Sphere {
            center: place(center),
            radius,
        },
        SensorGeometry::Cuboid {
            center,
            half_extents,
            yaw,
        } => SensorGeometry::Cuboid {
            center: place(center),
            half_extents,
            yaw: yaw + robot.yaw,
        },
    }
}

/// `alpha raw + (1 - alpha) prev`
pub fn ema(prev: f64, raw: f64, alpha: f64) -> f64 {
    alpha * raw + (1.0 - alpha) * prev
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalSensor {
    pub spec: SensorSpec,
    /// m^2
    pub area: f64,
    /// kW/m^2
    pub raw_irradiance: f64,
    /// kW/m^2
    pub filtered_irradiance: f64,
    /// kJ/m^2
    pub dose: f64,
}

impl ThermalSensor {
    pub fn new(spec: SensorSpec) -> Self {
        let area = spec.geometry.area();
        Self {
            spec,
            area,
            raw_irradiance: 0.0,
            filtered_irradiance: 0.0,
            dose: 0.0,
        }
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    /// Converts collected joules over `dt` into raw irradiance.
    pub fn set_raw_from_energy(&mut self, joules: f64, dt: f64) {
        self.raw_irradiance = joules / (self.area * dt) / 1000.0;
    }

    pub fn ema_update(&mut self) {
        self.filtered_irradiance = ema(
            self.filtered_irradiance,
            self.raw_irradiance,
            self.spec.ema_alpha,
        );
    }

    /// Left-Riemann dose increment with the current filtered reading.
    pub fn accumulate_dose(&mut self, dt: f64) {
        self.dose += self.filtered_irradiance * dt;
    }

    /// Full per-step update: raw, filter, dose.
    pub fn record(&mut self, joules: f64, dt: f64) {
        self.set_raw_from_energy(joules, dt);
        self.ema_update();
        self.accumulate_dose(dt);
    }
}

/// One reading as published on `sensors/thermal`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub id: String,
    pub raw: f64,
    pub filtered: f64,
    pub dose: f64,
}

impl From<&ThermalSensor> for SensorReading {
    fn from(s: &ThermalSensor) -> Self {
        SensorReading {
            id: s.spec.id.clone(),
            raw: s.raw_irradiance,
            filtered: s.filtered_irradiance,
            dose: s.dose,
        }
    }
}
