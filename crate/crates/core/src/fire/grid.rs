use glam::DVec3;

use super::{Boundary, SolverParams};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    Fuel,
    O2,
    Co2,
    H2o,
}

/// Voxel state. Cell `(i, j, k)` spans `[i h, (i+1) h] x ...`; `k` is up.
#[derive(Debug, Clone, PartialEq)]
pub struct FireGrid {
    pub dims: [usize; 3],
    pub h: f64,
    /// x-velocity on x-faces, `(nx+1) * ny * nz`.
    pub u: Vec<f64>,
    /// y-velocity on y-faces, `nx * (ny+1) * nz`.
    pub v: Vec<f64>,
    /// z-velocity on z-faces, `nx * ny * (nz+1)`.
    pub w: Vec<f64>,
    pub temperature: Vec<f64>,
    pub fuel: Vec<f64>,
    pub o2: Vec<f64>,
    pub co2: Vec<f64>,
    pub h2o: Vec<f64>,
    /// kg/m^3
    pub soot: Vec<f64>,
    pub solid: Vec<bool>,
    /// Last pressure solution, reused as the initial guess.
    pub pressure: Vec<f64>,
    pub side: Boundary,
    pub top: Boundary,
    pub ambient_temperature: f64,
    pub ambient_o2: f64,
}

impl FireGrid {
    /// Quiescent ambient grid with closed floor and the given boundaries.
    pub fn ambient(dims: [usize; 3], h: f64, params: &SolverParams) -> Self {
        let [nx, ny, nz] = dims;
        let n = nx * ny * nz;
        Self {
            dims,
            h,
            u: vec![0.0; (nx + 1) * ny * nz],
            v: vec![0.0; nx * (ny + 1) * nz],
            w: vec![0.0; nx * ny * (nz + 1)],
            temperature: vec![params.ambient_temperature; n],
            fuel: vec![0.0; n],
            o2: vec![params.ambient_o2; n],
            co2: vec![0.0; n],
            h2o: vec![0.0; n],
            soot: vec![0.0; n],
            solid: vec![false; n],
            pressure: vec![0.0; n],
            side: params.side_boundary,
            top: params.top_boundary,
            ambient_temperature: params.ambient_temperature,
            ambient_o2: params.ambient_o2,
        }
    }

    /// Ambient grid with the scenario's boxes rasterized as solid voxels.
    pub fn from_scenario(sc: &Scenario) -> Self {
        let mut g = Self::ambient(sc.grid_dims(), sc.voxel_size, &sc.solver);
        for b in &sc.scene {
            g.mark_solid(b.lo(), b.hi());
        }
        g
    }

    /// Marks every voxel whose center lies inside `[lo, hi]` as solid.
    pub fn mark_solid(&mut self, lo: DVec3, hi: DVec3) {
        let [nx, ny, nz] = self.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let c = self.cell_center(i, j, k);
                    if c.cmpge(lo).all() && c.cmple(hi).all() {
                        let id = self.idx(i, j, k);
                        self.solid[id] = true;
                    }
                }
            }
        }
        self.enforce_solid();
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, id: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [id % nx, (id / nx) % ny, id / (nx * ny)]
    }

    #[inline]
    pub fn u_idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + (self.dims[0] + 1) * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn v_idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + (self.dims[1] + 1) * k)
    }

    #[inline]
    pub fn w_idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> DVec3 {
        DVec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.h
    }

    pub fn extent(&self) -> DVec3 {
        DVec3::new(
            self.dims[0] as f64,
            self.dims[1] as f64,
            self.dims[2] as f64,
        ) * self.h
    }

    pub fn voxel_volume(&self) -> f64 {
        self.h * self.h * self.h
    }

    /// Voxel containing `p`, if inside the grid.
    pub fn locate(&self, p: DVec3) -> Option<[usize; 3]> {
        let q = p / self.h;
        if q.cmplt(DVec3::ZERO).any() {
            return None;
        }
        let c = [q.x as usize, q.y as usize, q.z as usize];
        (c[0] < self.dims[0] && c[1] < self.dims[1] && c[2] < self.dims[2]).then_some(c)
    }

    pub fn species(&self, s: Species) -> &[f64] {
        match s {
            Species::Fuel => &self.fuel,
            Species::O2 => &self.o2,
            Species::Co2 => &self.co2,
            Species::H2o => &self.h2o,
        }
    }

    /// Cell-centered velocity (average of the two faces on each axis).
    pub fn cell_velocity(&self, i: usize, j: usize, k: usize) -> DVec3 {
        DVec3::new(
            0.5 * (self.u[self.u_idx(i, j, k)] + self.u[self.u_idx(i + 1, j, k)]),
            0.5 * (self.v[self.v_idx(i, j, k)] + self.v[self.v_idx(i, j + 1, k)]),
            0.5 * (self.w[self.w_idx(i, j, k)] + self.w[self.w_idx(i, j, k + 1)]),
        )
    }

    pub fn max_speed(&self) -> f64 {
        let [nx, ny, nz] = self.dims;
        let mut m2 = 0.0_f64;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    m2 = m2.max(self.cell_velocity(i, j, k).length_squared());
                }
            }
        }
        // Face values can exceed the cell average at shear layers.
        let face = self
            .u
            .iter()
            .chain(&self.v)
            .chain(&self.w)
            .fold(0.0_f64, |a, &x| a.max(x.abs()));
        m2.sqrt().max(face)
    }

    #[inline]
    pub fn is_solid(&self, i: isize, j: isize, k: isize) -> bool {
        let [nx, ny, nz] = self.dims;
        if i < 0 || j < 0 || k < 0 || i >= nx as isize || j >= ny as isize || k >= nz as isize {
            return false;
        }
        self.solid[self.idx(i as usize, j as usize, k as usize)]
    }

    /// Whether the x-face at index `i` (between cells i-1 and i) carries no flow.
    pub fn u_fixed(&self, i: usize, j: usize, k: usize) -> bool {
        let nx = self.dims[0];
        if (i == 0 || i == nx) && self.side == Boundary::Wall {
            return true;
        }
        let (i, j, k) = (i as isize, j as isize, k as isize);
        self.is_solid(i - 1, j, k) || self.is_solid(i, j, k)
    }

    pub fn v_fixed(&self, i: usize, j: usize, k: usize) -> bool {
        let ny = self.dims[1];
        if (j == 0 || j == ny) && self.side == Boundary::Wall {
            return true;
        }
        let (i, j, k) = (i as isize, j as isize, k as isize);
        self.is_solid(i, j - 1, k) || self.is_solid(i, j, k)
    }

    pub fn w_fixed(&self, i: usize, j: usize, k: usize) -> bool {
        let nz = self.dims[2];
        if k == 0 || (k == nz && self.top == Boundary::Wall) {
            return true;
        }
        let (i, j, k) = (i as isize, j as isize, k as isize);
        self.is_solid(i, j, k - 1) || self.is_solid(i, j, k)
    }

    /// Zeroes every face velocity touching a solid voxel or a wall boundary
    /// and resets solid voxels to the ambient state.
    pub fn enforce_solid(&mut self) {
        let [nx, ny, nz] = self.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..=nx {
                    if self.u_fixed(i, j, k) {
                        let id = self.u_idx(i, j, k);
                        self.u[id] = 0.0;
                    }
                }
            }
        }
        for k in 0..nz {
            for j in 0..=ny {
                for i in 0..nx {
                    if self.v_fixed(i, j, k) {
                        let id = self.v_idx(i, j, k);
                        self.v[id] = 0.0;
                    }
                }
            }
        }
        for k in 0..=nz {
            for j in 0..ny {
                for i in 0..nx {
                    if self.w_fixed(i, j, k) {
                        let id = self.w_idx(i, j, k);
                        self.w[id] = 0.0;
                    }
                }
            }
        }
        for id in 0..self.len() {
            if self.solid[id] {
                self.temperature[id] = self.ambient_temperature;
                self.fuel[id] = 0.0;
                self.o2[id] = self.ambient_o2;
                self.co2[id] = 0.0;
                self.h2o[id] = 0.0;
                self.soot[id] = 0.0;
                self.pressure[id] = 0.0;
            }
        }
    }

    /// Trilinear sample of a cell-centered field. Points beyond an open
    /// boundary return `outside`; everything else clamps to the grid.
    pub fn sample_cell(&self, field: &[f64], p: DVec3, outside: f64) -> f64 {
        if self.beyond_open(p) {
            return outside;
        }
        lerp3(field, p / self.h - DVec3::splat(0.5), self.dims)
    }

    /// True when `p` lies outside the grid through an open face.
    pub fn beyond_open(&self, p: DVec3) -> bool {
        let e = self.extent();
        if self.side == Boundary::Open && (p.x < 0.0 || p.y < 0.0 || p.x > e.x || p.y > e.y) {
            return true;
        }
        self.top == Boundary::Open && p.z > e.z
    }

    /// Interpolated velocity at an arbitrary point.
    pub fn sample_velocity(&self, p: DVec3) -> DVec3 {
        DVec3::new(
            self.sample_face(&self.u, p, 0),
            self.sample_face(&self.v, p, 1),
            self.sample_face(&self.w, p, 2),
        )
    }

    /// Trilinear sample of a face-centered component along `axis`.
    #[inline]
    pub fn sample_face(&self, field: &[f64], p: DVec3, axis: usize) -> f64 {
        let mut q = p / self.h - DVec3::splat(0.5);
        q[axis] += 0.5;
        let mut dims = self.dims;
        dims[axis] += 1;
        lerp3(field, q, dims)
    }

    /// Total mass (kg) of a species over fluid voxels.
    pub fn species_mass(&self, s: Species, density: f64) -> f64 {
        let field = self.species(s);
        let m: f64 = field
            .iter()
            .zip(&self.solid)
            .filter(|(_, &solid)| !solid)
            .map(|(y, _)| *y)
            .sum();
        m * density * self.voxel_volume()
    }
}

/// Clamped lattice interval and weight along one axis.
#[inline]
fn axis_weights(x: f64, n: usize) -> (usize, usize, f64) {
    let x = x.clamp(0.0, (n - 1) as f64);
    let i0 = (x as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, x - i0 as f64)
}

/// Trilinear interpolation at continuous lattice coordinate `q` of a field
/// with `dims` samples (x fastest), clamped to the lattice.
#[inline]
pub(crate) fn lerp3(field: &[f64], q: DVec3, dims: [usize; 3]) -> f64 {
    let (i0, i1, fx) = axis_weights(q.x, dims[0]);
    let (j0, j1, fy) = axis_weights(q.y, dims[1]);
    let (k0, k1, fz) = axis_weights(q.z, dims[2]);
    let sx = dims[0];
    let sxy = dims[0] * dims[1];
    let at = |i: usize, j: usize, k: usize| field[i + sx * j + sxy * k];
    let c00 = at(i0, j0, k0) + fx * (at(i1, j0, k0) - at(i0, j0, k0));
    let c10 = at(i0, j1, k0) + fx * (at(i1, j1, k0) - at(i0, j1, k0));
    let c01 = at(i0, j0, k1) + fx * (at(i1, j0, k1) - at(i0, j0, k1));
    let c11 = at(i0, j1, k1) + fx * (at(i1, j1, k1) - at(i0, j1, k1));
    let c0 = c00 + fy * (c10 - c00);
    let c1 = c01 + fy * (c11 - c01);
    c0 + fz * (c1 - c0)
}
