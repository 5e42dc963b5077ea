//! Pressure projection: solves the Poisson problem for the face velocities
//! with Jacobi-preconditioned conjugate gradients and subtracts the gradient.

use super::{Boundary, FireGrid, SolverParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionStats {
    pub iterations: usize,
    pub initial_divergence: f64,
    pub final_divergence: f64,
}

/// Per-cell discrete divergence `(sum of outflow - inflow) / h`; zero in
/// solid voxels.
pub fn divergence(grid: &FireGrid) -> Vec<f64> {
    let [nx, ny, nz] = grid.dims;
    let inv_h = 1.0 / grid.h;
    let mut div = vec![0.0; grid.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let id = grid.idx(i, j, k);
                if grid.solid[id] {
                    continue;
                }
                div[id] = (grid.u[grid.u_idx(i + 1, j, k)] - grid.u[grid.u_idx(i, j, k)]
                    + grid.v[grid.v_idx(i, j + 1, k)]
                    - grid.v[grid.v_idx(i, j, k)]
                    + grid.w[grid.w_idx(i, j, k + 1)]
                    - grid.w[grid.w_idx(i, j, k)])
                    * inv_h;
            }
        }
    }
    div
}

/// RMS divergence over fluid voxels.
pub fn divergence_norm(grid: &FireGrid) -> f64 {
    rms(&divergence(grid), &grid.solid)
}

fn rms(x: &[f64], solid: &[bool]) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for (v, &sol) in x.iter().zip(solid) {
        if !sol {
            s += v * v;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Per-cell neighbor structure of the Poisson operator.
struct Laplacian {
    dims: [usize; 3],
    /// Number of coupled neighbors plus Dirichlet (open) faces, per cell.
    diag: Vec<f64>,
    /// Bitmask of fluid neighbors: -x, +x, -y, +y, -z, +z.
    links: Vec<u8>,
    fluid: Vec<bool>,
    any_dirichlet: bool,
}

impl Laplacian {
    fn new(g: &FireGrid) -> Self {
        let [nx, ny, nz] = g.dims;
        let n = g.len();
        let mut diag = vec![0.0; n];
        let mut links = vec![0u8; n];
        let mut any_dirichlet = false;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let id = g.idx(i, j, k);
                    if g.solid[id] {
                        continue;
                    }
                    let mut d = 0.0;
                    let mut m = 0u8;
                    let (ii, jj, kk) = (i as isize, j as isize, k as isize);
                    let nbrs: [(isize, isize, isize, bool); 6] = [
                        (ii - 1, jj, kk, i == 0),
                        (ii + 1, jj, kk, i + 1 == nx),
                        (ii, jj - 1, kk, j == 0),
                        (ii, jj + 1, kk, j + 1 == ny),
                        (ii, jj, kk - 1, k == 0),
                        (ii, jj, kk + 1, k + 1 == nz),
                    ];
                    for (b, &(a, bb, c, at_edge)) in nbrs.iter().enumerate() {
                        if at_edge {
                            let open = match b {
                                0..=3 => g.side == Boundary::Open,
                                4 => false,
                                _ => g.top == Boundary::Open,
                            };
                            if open {
                                d += 1.0;
                                any_dirichlet = true;
                            }
                        } else if !g.is_solid(a, bb, c) {
                            d += 1.0;
                            m |= 1 << b;
                        }
                    }
                    diag[id] = d;
                    links[id] = m;
                }
            }
        }
        let fluid = g.solid.iter().map(|s| !s).collect();
        Self {
            dims: g.dims,
            diag,
            links,
            fluid,
            any_dirichlet,
        }
    }

    /// y = A x with A = -h^2 * Laplacian (symmetric positive semidefinite).
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let [nx, ny, _] = self.dims;
        let sx = 1;
        let sy = nx;
        let sz = nx * ny;
        for id in 0..x.len() {
            if !self.fluid[id] {
                y[id] = 0.0;
                continue;
            }
            let m = self.links[id];
            let mut acc = self.diag[id] * x[id];
            if m & 1 != 0 {
                acc -= x[id - sx];
            }
            if m & 2 != 0 {
                acc -= x[id + sx];
            }
            if m & 4 != 0 {
                acc -= x[id - sy];
            }
            if m & 8 != 0 {
                acc -= x[id + sy];
            }
            if m & 16 != 0 {
                acc -= x[id - sz];
            }
            if m & 32 != 0 {
                acc -= x[id + sz];
            }
            y[id] = acc;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Fixed-order chunked sum keeps results bit-reproducible.
    a.chunks(1024)
        .zip(b.chunks(1024))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .sum()
}

fn remove_mean(x: &mut [f64], fluid: &[bool]) {
    let (mut s, mut n) = (0.0, 0usize);
    for (v, &f) in x.iter().zip(fluid) {
        if f {
            s += *v;
            n += 1;
        }
    }
    if n == 0 {
        return;
    }
    let mean = s / n as f64;
    for (v, &f) in x.iter_mut().zip(fluid) {
        if f {
            *v -= mean;
        }
    }
}

/// Makes the face velocity field discretely divergence free. Solid voxels
/// and wall boundaries are zero-normal-flow; open boundaries hold zero
/// pressure. Iterates at most `params.pressure_iters` times.
pub fn project_incompressible(grid: &mut FireGrid, params: &SolverParams) -> ProjectionStats {
    grid.enforce_solid();
    let lap = Laplacian::new(grid);
    let div = divergence(grid);
    let initial = rms(&div, &grid.solid);
    if initial == 0.0 {
        return ProjectionStats {
            iterations: 0,
            initial_divergence: 0.0,
            final_divergence: 0.0,
        };
    }
    let h = grid.h;
    // A p = -h^2 div; pressure carries units of velocity * length.
    let mut b: Vec<f64> = div.iter().map(|d| -d * h * h).collect();
    if !lap.any_dirichlet {
        remove_mean(&mut b, &lap.fluid);
    }
    let n = b.len();
    let mut p = grid.pressure.clone();
    let mut r = vec![0.0; n];
    lap.apply(&p, &mut r);
    for id in 0..n {
        r[id] = if lap.fluid[id] { b[id] - r[id] } else { 0.0 };
    }
    let inv_diag: Vec<f64> = lap
        .diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut s = z.clone();
    let mut rz = dot(&r, &z);
    let b_norm = dot(&b, &b).sqrt();
    let tol = params.pressure_tolerance * b_norm;
    let mut q = vec![0.0; n];
    let mut iterations = 0;
    for _ in 0..params.pressure_iters {
        if dot(&r, &r).sqrt() <= tol {
            break;
        }
        iterations += 1;
        lap.apply(&s, &mut q);
        let sq = dot(&s, &q);
        if sq <= 0.0 {
            break;
        }
        let alpha = rz / sq;
        for id in 0..n {
            p[id] += alpha * s[id];
            r[id] -= alpha * q[id];
        }
        for id in 0..n {
            z[id] = r[id] * inv_diag[id];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for id in 0..n {
            s[id] = z[id] + beta * s[id];
        }
    }
    apply_gradient(grid, &p);
    grid.pressure = p;
    ProjectionStats {
        iterations,
        initial_divergence: initial,
        final_divergence: divergence_norm(grid),
    }
}

fn apply_gradient(g: &mut FireGrid, p: &[f64]) {
    let [nx, ny, nz] = g.dims;
    let inv_h = 1.0 / g.h;
    let pval = |g: &FireGrid, i: isize, j: isize, k: isize| -> f64 {
        if i < 0 || j < 0 || k < 0 || i >= nx as isize || j >= ny as isize || k >= nz as isize {
            0.0
        } else {
            p[g.idx(i as usize, j as usize, k as usize)]
        }
    };
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..=nx {
                if g.u_fixed(i, j, k) {
                    continue;
                }
                let (a, b, c) = (i as isize, j as isize, k as isize);
                let grad = (pval(g, a, b, c) - pval(g, a - 1, b, c)) * inv_h;
                let id = g.u_idx(i, j, k);
                g.u[id] -= grad;
            }
        }
    }
    for k in 0..nz {
        for j in 0..=ny {
            for i in 0..nx {
                if g.v_fixed(i, j, k) {
                    continue;
                }
                let (a, b, c) = (i as isize, j as isize, k as isize);
                let grad = (pval(g, a, b, c) - pval(g, a, b - 1, c)) * inv_h;
                let id = g.v_idx(i, j, k);
                g.v[id] -= grad;
            }
        }
    }
    for k in 0..=nz {
        for j in 0..ny {
            for i in 0..nx {
                if g.w_fixed(i, j, k) {
                    continue;
                }
                let (a, b, c) = (i as isize, j as isize, k as isize);
                let grad = (pval(g, a, b, c) - pval(g, a, b, c - 1)) * inv_h;
                let id = g.w_idx(i, j, k);
                g.w[id] -= grad;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use glam::DVec3;

    fn params() -> SolverParams {
        SolverParams {
            pressure_iters: 200,
            pressure_tolerance: 1e-12,
            ..SolverParams::default()
        }
    }

    #[test]
    fn divergence_free_field_is_unchanged() {
        let p = params();
        let mut g = FireGrid::ambient([8, 8, 8], 0.25, &p);
        // uniform through-flow between the open sides
        g.u.iter_mut().for_each(|x| *x = 0.7);
        g.enforce_solid();
        let before = g.clone();
        assert!(divergence_norm(&g) < 1e-12);
        project_incompressible(&mut g, &p);
        for (a, b) in g.u.iter().zip(&before.u) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_divergence_is_removed() {
        let p = params();
        let mut g = FireGrid::ambient([8, 8, 8], 0.25, &p);
        // u = c x, v = c y, w = c z has constant divergence 3c
        let c = 0.5;
        let [nx, ny, nz] = g.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..=nx {
                    let id = g.u_idx(i, j, k);
                    g.u[id] = c * i as f64 * g.h;
                }
            }
        }
        for k in 0..nz {
            for j in 0..=ny {
                for i in 0..nx {
                    let id = g.v_idx(i, j, k);
                    g.v[id] = c * j as f64 * g.h;
                }
            }
        }
        for k in 0..=nz {
            for j in 0..ny {
                for i in 0..nx {
                    let id = g.w_idx(i, j, k);
                    g.w[id] = c * k as f64 * g.h;
                }
            }
        }
        let stats = project_incompressible(&mut g, &p);
        assert!(stats.initial_divergence > 1.0);
        assert!(
            stats.final_divergence < 0.01 * stats.initial_divergence,
            "{stats:?}"
        );
    }

    #[test]
    fn flow_into_wall_stops_at_wall() {
        let p = SolverParams {
            side_boundary: Boundary::Open,
            ..params()
        };
        let mut g = FireGrid::ambient([8, 4, 4], 0.25, &p);
        g.mark_solid(DVec3::new(1.5, 0.0, 0.0), DVec3::new(2.0, 1.0, 1.0));
        g.u.iter_mut().for_each(|x| *x = 1.0);
        project_incompressible(&mut g, &p);
        // x-faces touching the wall column (cells i = 6, 7)
        for k in 0..4 {
            for j in 0..4 {
                assert!(g.u[g.u_idx(6, j, k)].abs() < 1e-6);
                assert!(g.u[g.u_idx(8, j, k)].abs() < 1e-6);
            }
        }
        assert!(divergence_norm(&g) < 1e-6);
    }
}
