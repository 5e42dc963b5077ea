use glam::DVec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{project_incompressible, Boundary, FireError, FireGrid, SolverParams};
use crate::scenario::{FireSource, Scenario};

/// Voxels forming the injection region of a source: all voxels whose
/// center lies within the radius, or the voxel containing the center if
/// the radius is smaller than a voxel.
pub fn source_cells(grid: &FireGrid, fire: &FireSource) -> Vec<usize> {
    let c = fire.center();
    let mut cells = Vec::new();
    for id in 0..grid.len() {
        let [i, j, k] = grid.coords(id);
        if !grid.solid[id] && grid.cell_center(i, j, k).distance(c) <= fire.radius {
            cells.push(id);
        }
    }
    if cells.is_empty() {
        if let Some([i, j, k]) = grid.locate(c) {
            let id = grid.idx(i, j, k);
            if !grid.solid[id] {
                cells.push(id);
            }
        }
    }
    cells
}

/// Adds fuel mass (diluting the resident gas) and holds the pilot
/// temperature inside each source region.
pub fn inject_sources(
    grid: &mut FireGrid,
    fires: &[FireSource],
    regions: &[Vec<usize>],
    params: &SolverParams,
    dt: f64,
    rng: &mut ChaCha8Rng,
) {
    let cell_mass = params.air_density * grid.voxel_volume();
    for (fire, cells) in fires.iter().zip(regions) {
        if cells.is_empty() {
            continue;
        }
        let per_cell = fire.fuel_rate(params.heat_of_combustion) * dt / cells.len() as f64;
        for &id in cells {
            let jitter = if params.source_jitter > 0.0 {
                1.0 + params.source_jitter * rng.random_range(-1.0..1.0)
            } else {
                1.0
            };
            let dm = per_cell * jitter;
            let f = dm / (cell_mass + dm);
            let keep = 1.0 - f;
            grid.fuel[id] = grid.fuel[id] * keep + f;
            grid.o2[id] *= keep;
            grid.co2[id] *= keep;
            grid.h2o[id] *= keep;
            grid.temperature[id] = grid.temperature[id].max(fire.ignition_temperature);
        }
    }
}

/// Single-step Arrhenius reaction, stoichiometric in oxygen, applied per
/// voxel. Returns the total fuel mass burned (kg).
pub fn combustion_substep(grid: &mut FireGrid, params: &SolverParams, dt: f64) -> f64 {
    let s = params.stoich_ratio;
    let cell_mass = params.air_density * grid.voxel_volume();
    let mut burned_total = 0.0;
    for id in 0..grid.len() {
        let yf = grid.fuel[id];
        let yo = grid.o2[id];
        if grid.solid[id] || yf <= 0.0 || yo <= 0.0 {
            continue;
        }
        let t = grid.temperature[id];
        let omega = params.arrhenius_a
            * yf
            * yo
            * (-params.activation_energy / (params.gas_constant * t)).exp();
        let d = (omega * dt).min(yf).min(yo / s);
        if d <= 0.0 {
            continue;
        }
        grid.fuel[id] = yf - d;
        grid.o2[id] = (yo - s * d).max(0.0);
        let products = (1.0 + s - params.soot_yield) * d;
        grid.co2[id] += params.co2_share * products;
        grid.h2o[id] += (1.0 - params.co2_share) * products;
        grid.temperature[id] =
            (t + params.heat_of_combustion * d / params.specific_heat).min(params.max_temperature);
        // d * cell_mass is the burned fuel mass in this voxel
        grid.soot[id] += params.soot_yield * d * cell_mass / grid.voxel_volume();
        burned_total += d * cell_mass;
    }
    burned_total
}

/// Boussinesq buoyancy on the vertical faces: `w += dt beta (T_face - T_amb) g`
/// with the face temperature averaged from the adjacent fluid voxels.
pub fn buoyancy_substep(grid: &mut FireGrid, params: &SolverParams, dt: f64) {
    let [nx, ny, nz] = grid.dims;
    let coef = dt * params.buoyancy_beta * params.gravity;
    let t_amb = params.ambient_temperature;
    for k in 0..=nz {
        for j in 0..ny {
            for i in 0..nx {
                if grid.w_fixed(i, j, k) {
                    continue;
                }
                let below = (k > 0).then(|| grid.temperature[grid.idx(i, j, k - 1)]);
                let above = (k < nz).then(|| grid.temperature[grid.idx(i, j, k)]);
                let t_face = match (below, above) {
                    (Some(a), Some(b)) => 0.5 * (a + b),
                    (Some(a), None) | (None, Some(a)) => a,
                    (None, None) => t_amb,
                };
                let id = grid.w_idx(i, j, k);
                grid.w[id] += coef * (t_face - t_amb);
            }
        }
    }
}

fn backtrace(grid: &FireGrid, p: DVec3, dt: f64) -> DVec3 {
    let v0 = grid.sample_velocity(p);
    let mid = p - 0.5 * dt * v0;
    p - dt * grid.sample_velocity(mid)
}

/// Transport step: semi-Lagrangian (second-order backtrace, trilinear
/// sampling) for the face velocities, conservative flux form for scalars.
pub fn advect(grid: &mut FireGrid, dt: f64) {
    transport_scalars(grid, dt);
    advect_velocity(grid, dt);
}

fn advect_velocity(grid: &mut FireGrid, dt: f64) {
    let [nx, ny, nz] = grid.dims;
    let h = grid.h;
    let old = grid.clone();

    for k in 0..nz {
        for j in 0..ny {
            for i in 0..=nx {
                if old.u_fixed(i, j, k) {
                    continue;
                }
                let p = DVec3::new(i as f64, j as f64 + 0.5, k as f64 + 0.5) * h;
                let b = backtrace(&old, p, dt);
                let id = old.u_idx(i, j, k);
                grid.u[id] = old.sample_face(&old.u, b, 0);
            }
        }
    }
    for k in 0..nz {
        for j in 0..=ny {
            for i in 0..nx {
                if old.v_fixed(i, j, k) {
                    continue;
                }
                let p = DVec3::new(i as f64 + 0.5, j as f64, k as f64 + 0.5) * h;
                let b = backtrace(&old, p, dt);
                let id = old.v_idx(i, j, k);
                grid.v[id] = old.sample_face(&old.v, b, 1);
            }
        }
    }
    for k in 0..=nz {
        for j in 0..ny {
            for i in 0..nx {
                if old.w_fixed(i, j, k) {
                    continue;
                }
                let p = DVec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64) * h;
                let b = backtrace(&old, p, dt);
                let id = old.w_idx(i, j, k);
                grid.w[id] = old.sample_face(&old.w, b, 2);
            }
        }
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Finite-volume transport of the cell-centered scalars through the face
/// velocities: upwind fluxes with minmod-limited linear reconstruction.
/// Fluxes cancel pairwise between neighbors, so closed domains conserve
/// every scalar to rounding. Inflow through open faces carries ambient
/// values.
fn transport_scalars(grid: &mut FireGrid, dt: f64) {
    let old = grid.clone();
    let old = &old;
    let [nx, ny, nz] = old.dims;
    let n = [nx, ny, nz];
    let stride = [1, nx, nx * ny];
    let ambient = [old.ambient_temperature, 0.0, old.ambient_o2, 0.0, 0.0, 0.0];
    let src: [&[f64]; 6] = [
        &old.temperature,
        &old.fuel,
        &old.o2,
        &old.co2,
        &old.h2o,
        &old.soot,
    ];
    let dst: [&mut Vec<f64>; 6] = [
        &mut grid.temperature,
        &mut grid.fuel,
        &mut grid.o2,
        &mut grid.co2,
        &mut grid.h2o,
        &mut grid.soot,
    ];
    let scale = dt / old.h;
    let fluid = |c: usize| !old.solid[c];

    for axis in 0..3 {
        let faces: &[f64] = match axis {
            0 => &old.u,
            1 => &old.v,
            _ => &old.w,
        };
        let mut fd = n;
        fd[axis] += 1;
        for k in 0..fd[2] {
            for j in 0..fd[1] {
                for i in 0..fd[0] {
                    let vel = faces[i + fd[0] * (j + fd[1] * k)];
                    if vel == 0.0 {
                        continue;
                    }
                    let f = [i, j, k][axis];
                    // cell on the high side sits at (i, j, k); low side one stride back
                    let hi = (f < n[axis]).then(|| i + nx * (j + ny * k));
                    let lo = (f > 0).then(|| {
                        let mut c = [i, j, k];
                        c[axis] -= 1;
                        c[0] + nx * (c[1] + ny * c[2])
                    });
                    let upwind = if vel > 0.0 { lo } else { hi };
                    let courant = vel.abs() * scale;
                    let face_vals: [f64; 6] = match upwind {
                        None => ambient,
                        Some(u) => {
                            let pos = if vel > 0.0 { f - 1 } else { f };
                            let minus = (pos > 0).then(|| u - stride[axis]).filter(|&c| fluid(c));
                            let plus = (pos + 1 < n[axis])
                                .then(|| u + stride[axis])
                                .filter(|&c| fluid(c));
                            std::array::from_fn(|q| {
                                let phi = src[q][u];
                                let slope = match (minus, plus) {
                                    (Some(m), Some(p)) => minmod(phi - src[q][m], src[q][p] - phi),
                                    _ => 0.0,
                                };
                                phi + vel.signum() * 0.5 * (1.0 - courant) * slope
                            })
                        }
                    };
                    for q in 0..6 {
                        let flux = vel * scale * face_vals[q];
                        if let Some(c) = lo {
                            dst[q][c] -= flux;
                        }
                        if let Some(c) = hi {
                            dst[q][c] += flux;
                        }
                    }
                }
            }
        }
    }
    clamp_species(grid);
}

/// Explicit diffusion of heat, species and soot with no-flux walls and
/// ambient ghost values beyond open boundaries. Subcycles internally to
/// stay within the explicit stability limit.
pub fn diffuse(grid: &mut FireGrid, params: &SolverParams, dt: f64) {
    let d = params.diffusivity;
    if d <= 0.0 {
        return;
    }
    let h2 = grid.h * grid.h;
    let n_sub = ((dt * d / h2) / 0.15).ceil().max(1.0) as usize;
    let lambda = dt / n_sub as f64 * d / h2;
    let [nx, ny, nz] = grid.dims;
    let ambient = [
        grid.ambient_temperature,
        0.0,
        grid.ambient_o2,
        0.0,
        0.0,
        0.0,
    ];
    let side_open = grid.side == Boundary::Open;
    let top_open = grid.top == Boundary::Open;

    // Per fluid voxel: fluid neighbor indices and the number of open
    // boundary faces (which exchange with the ambient state).
    let mut links: Vec<(usize, [usize; 6], u8, u8)> = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let id = grid.idx(i, j, k);
                if grid.solid[id] {
                    continue;
                }
                let mut nb = [0usize; 6];
                let mut count = 0u8;
                let mut open = 0u8;
                let cand = [
                    (i > 0).then(|| id - 1),
                    (i + 1 < nx).then(|| id + 1),
                    (j > 0).then(|| id - nx),
                    (j + 1 < ny).then(|| id + nx),
                    (k > 0).then(|| id - nx * ny),
                    (k + 1 < nz).then(|| id + nx * ny),
                ];
                for (a, c) in cand.into_iter().enumerate() {
                    match c {
                        Some(n) if !grid.solid[n] => {
                            nb[count as usize] = n;
                            count += 1;
                        }
                        Some(_) => {}
                        None => {
                            let is_open = match a {
                                0..=3 => side_open,
                                4 => false,
                                _ => top_open,
                            };
                            open += is_open as u8;
                        }
                    }
                }
                links.push((id, nb, count, open));
            }
        }
    }

    let mut fields: [&mut Vec<f64>; 6] = [
        &mut grid.temperature,
        &mut grid.fuel,
        &mut grid.o2,
        &mut grid.co2,
        &mut grid.h2o,
        &mut grid.soot,
    ];
    for (f, field) in fields.iter_mut().enumerate() {
        let amb = ambient[f];
        for _ in 0..n_sub {
            let old = field.clone();
            for &(id, nb, count, open) in &links {
                let c = old[id];
                let mut lap = open as f64 * (amb - c);
                for &n in &nb[..count as usize] {
                    lap += old[n] - c;
                }
                field[id] = c + lambda * lap;
            }
        }
    }
}

/// Clamps species into the simplex, temperature into its bounds and
/// zeroes flow through solids and walls.
fn apply_bounds(grid: &mut FireGrid, params: &SolverParams) {
    grid.enforce_solid();
    clamp_species(grid);
    for t in grid.temperature.iter_mut() {
        *t = t.clamp(params.temperature_floor, params.max_temperature);
    }
}

/// Projects each voxel's mass fractions onto `[0, 1]` with sum at most one.
fn clamp_species(grid: &mut FireGrid) {
    for id in 0..grid.len() {
        let mut y = [
            grid.fuel[id].clamp(0.0, 1.0),
            grid.o2[id].clamp(0.0, 1.0),
            grid.co2[id].clamp(0.0, 1.0),
            grid.h2o[id].clamp(0.0, 1.0),
        ];
        let sum: f64 = y.iter().sum();
        if sum > 1.0 {
            y.iter_mut().for_each(|x| *x /= sum);
        }
        grid.fuel[id] = y[0];
        grid.o2[id] = y[1];
        grid.co2[id] = y[2];
        grid.h2o[id] = y[3];
        grid.soot[id] = grid.soot[id].max(0.0);
    }
}

fn check_finite(grid: &FireGrid) -> Result<(), FireError> {
    let cell_fields: [(&'static str, &[f64]); 3] = [
        ("temperature", &grid.temperature),
        ("fuel", &grid.fuel),
        ("soot", &grid.soot),
    ];
    for (name, f) in cell_fields {
        if let Some(id) = f.iter().position(|x| !x.is_finite()) {
            return Err(FireError::NonFinite {
                field: name,
                voxel: grid.coords(id),
            });
        }
    }
    for (name, f) in [
        ("velocity", &grid.u),
        ("velocity", &grid.v),
        ("velocity", &grid.w),
    ] {
        if f.iter().any(|x| !x.is_finite()) {
            return Err(FireError::NonFinite {
                field: name,
                voxel: [0, 0, 0],
            });
        }
    }
    Ok(())
}

/// Largest step satisfying the CFL condition for the current velocity.
pub fn max_stable_dt(grid: &FireGrid, params: &SolverParams) -> f64 {
    params.cfl * grid.h / grid.max_speed().max(1e-9)
}

/// One solver step: injection, combustion, buoyancy, advection, diffusion,
/// projection, boundary conditions.
pub fn step(
    grid: &mut FireGrid,
    scenario: &Scenario,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(), FireError> {
    let regions: Vec<Vec<usize>> = scenario
        .fires
        .iter()
        .map(|f| source_cells(grid, f))
        .collect();
    step_with_regions(grid, &scenario.fires, &regions, &scenario.solver, dt, rng)
}

fn step_with_regions(
    grid: &mut FireGrid,
    fires: &[FireSource],
    regions: &[Vec<usize>],
    params: &SolverParams,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(), FireError> {
    let limit = max_stable_dt(grid, params);
    if dt > limit {
        return Err(FireError::Cfl { dt, limit });
    }
    inject_sources(grid, fires, regions, params, dt, rng);
    combustion_substep(grid, params, dt);
    // Scalars ride the projected (divergence-free) field from the previous
    // step; the buoyancy impulse only enters the momentum update.
    transport_scalars(grid, dt);
    buoyancy_substep(grid, params, dt);
    advect_velocity(grid, dt);
    diffuse(grid, params, dt);
    project_incompressible(grid, params);
    apply_bounds(grid, params);
    check_finite(grid)
}

/// Owns the fire state and advances it frame by frame, subcycling each
/// frame so every solver step satisfies the CFL condition.
#[derive(Debug, Clone)]
pub struct FireSim {
    pub grid: FireGrid,
    pub params: SolverParams,
    pub fires: Vec<FireSource>,
    regions: Vec<Vec<usize>>,
    rng: ChaCha8Rng,
    pub time: f64,
    pub steps: u64,
}

impl FireSim {
    pub fn new(scenario: &Scenario, seed: u64) -> Self {
        Self::with_grid(FireGrid::from_scenario(scenario), scenario, seed)
    }

    pub fn with_grid(grid: FireGrid, scenario: &Scenario, seed: u64) -> Self {
        let regions = scenario
            .fires
            .iter()
            .map(|f| source_cells(&grid, f))
            .collect();
        Self {
            grid,
            params: scenario.solver.clone(),
            fires: scenario.fires.clone(),
            regions,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x0f1e_5eed),
            time: 0.0,
            steps: 0,
        }
    }

    /// Advances by `frame_dt`, returning the number of solver steps taken.
    pub fn advance(&mut self, frame_dt: f64) -> Result<usize, FireError> {
        let mut remaining = frame_dt;
        let mut n = 0;
        while remaining > 1e-12 {
            // Headroom for acceleration within the step.
            let dt = (0.9 * max_stable_dt(&self.grid, &self.params)).min(remaining);
            step_with_regions(
                &mut self.grid,
                &self.fires,
                &self.regions,
                &self.params,
                dt,
                &mut self.rng,
            )?;
            remaining -= dt;
            n += 1;
        }
        self.time += frame_dt;
        self.steps += 1;
        Ok(n)
    }

    pub fn advance_for(&mut self, seconds: f64) -> Result<(), FireError> {
        let frames = (seconds / self.params.frame_dt).round() as usize;
        for _ in 0..frames {
            self.advance(self.params.frame_dt)?;
        }
        Ok(())
    }

    /// Replaces the heat release of every source by `factor` times its value.
    pub fn scale_sources(&mut self, factor: f64) {
        for f in &mut self.fires {
            f.heat_release_rate *= factor;
            if let Some(r) = f.fuel_injection_rate.as_mut() {
                *r *= factor;
            }
        }
    }
}
