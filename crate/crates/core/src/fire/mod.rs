//! Gas-phase fire model on a voxel grid.
//!
//! Scalars (temperature, species mass fractions, soot density) live at cell
//! centers; velocity components live on cell faces (MAC layout) so that the
//! pressure projection and the solid no-penetration condition are exact.

mod dump;
mod grid;
mod pressure;
mod solver;

pub use dump::{write_field_dump, DumpHeader};
pub use grid::{FireGrid, Species};
pub use pressure::{divergence_norm, project_incompressible, ProjectionStats};
pub use solver::{
    advect, buoyancy_substep, combustion_substep, diffuse, inject_sources, max_stable_dt, step,
    FireSim,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FireError {
    #[error("time step {dt} s exceeds the CFL limit {limit} s; subcycle")]
    Cfl { dt: f64, limit: f64 },
    #[error("solver diverged: non-finite {field} at voxel {voxel:?}")]
    NonFinite {
        field: &'static str,
        voxel: [usize; 3],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Wall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    /// K
    pub ambient_temperature: f64,
    /// Thermal expansion coefficient, 1/K.
    pub buoyancy_beta: f64,
    /// m/s^2
    pub gravity: f64,
    /// Pre-exponential factor, 1/s.
    pub arrhenius_a: f64,
    /// J/mol
    pub activation_energy: f64,
    /// J/(mol K)
    pub gas_constant: f64,
    /// J per kg of fuel.
    pub heat_of_combustion: f64,
    /// kg O2 per kg fuel.
    pub stoich_ratio: f64,
    /// Mass share of CO2 among the gaseous products.
    pub co2_share: f64,
    /// Species and heat diffusivity, m^2/s.
    pub diffusivity: f64,
    /// kg soot per kg fuel burned.
    pub soot_yield: f64,
    pub cfl: f64,
    pub pressure_iters: usize,
    pub pressure_tolerance: f64,
    /// kg/m^3, constant (Boussinesq).
    pub air_density: f64,
    /// J/(kg K)
    pub specific_heat: f64,
    pub ambient_o2: f64,
    /// Lower clamp on temperature, K.
    pub temperature_floor: f64,
    /// Upper clamp on temperature, K.
    pub max_temperature: f64,
    /// Fire-loop frame period, s. Each frame is subcycled to respect the CFL.
    pub frame_dt: f64,
    /// Relative random modulation of the source injection per voxel.
    pub source_jitter: f64,
    pub side_boundary: Boundary,
    pub top_boundary: Boundary,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            ambient_temperature: 293.15,
            buoyancy_beta: 1.0 / 293.15,
            gravity: 9.81,
            arrhenius_a: 2.0e6,
            activation_energy: 7.0e4,
            gas_constant: 8.314,
            heat_of_combustion: 46.0e6,
            stoich_ratio: 3.64,
            co2_share: 0.647,
            diffusivity: 2.0e-3,
            soot_yield: 0.02,
            cfl: 0.6,
            pressure_iters: 80,
            pressure_tolerance: 1e-5,
            air_density: 1.2,
            specific_heat: 1005.0,
            ambient_o2: 0.233,
            temperature_floor: 200.0,
            max_temperature: 1500.0,
            frame_dt: 0.05,
            source_jitter: 0.25,
            side_boundary: Boundary::Open,
            top_boundary: Boundary::Open,
        }
    }
}
