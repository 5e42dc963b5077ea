//! Thermally weighted A* on the averaged costmap, and the constant-speed
//! sensor walk that measures the dose along a planned path.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use glam::DVec2;
use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmap::ThermalCostmap;
use crate::geometry::AxisBox;
use crate::radiation::Pose2;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("start or goal lies outside the map")]
    OutOfMap,
    #[error("start or goal lies in a lethal cell")]
    Lethal,
    #[error("goal is unreachable from start")]
    NoPath,
    #[error("path is empty")]
    EmptyPath,
}

#[derive(Debug, Clone)]
pub struct PlanRequest<'a> {
    pub start: DVec2,
    pub goal: DVec2,
    pub weight: f64,
    pub costmap: &'a ThermalCostmap,
    /// Impassable cells (walls), same layout as the costmap.
    pub lethal: Option<&'a [bool]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    pub waypoints: Vec<[f64; 2]>,
    pub cells: Vec<(usize, usize)>,
    /// m
    pub length: f64,
    /// Sum of edge costs.
    pub cost: f64,
    /// kW/m^2, highest averaged cost along the path rescaled to irradiance.
    pub predicted_peak: f64,
}

/// Cells whose footprint overlaps a robot-blocking box.
pub fn lethal_mask(map: &ThermalCostmap, scene: &[AxisBox]) -> Vec<bool> {
    let mut mask = vec![false; map.width * map.height];
    let half = map.resolution / 2.0;
    for j in 0..map.height {
        for i in 0..map.width {
            let c = map.cell_center(i, j);
            if scene
                .iter()
                .any(|b| b.kind.blocks_robot() && b.overlaps_square(c, half * 0.999))
            {
                mask[map.index(i, j)] = true;
            }
        }
    }
    mask
}

const MOVES: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Grid graph shared by the search and the optimality oracle.
pub struct CostGrid<'a> {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub cost: &'a [f64],
    pub lethal: Option<&'a [bool]>,
    pub weight: f64,
}

impl CostGrid<'_> {
    fn blocked(&self, i: i64, j: i64) -> bool {
        if i < 0 || j < 0 || i >= self.width as i64 || j >= self.height as i64 {
            return true;
        }
        self.lethal
            .is_some_and(|m| m[j as usize * self.width + i as usize])
    }

    /// `d (1 + w C[v] / 100)` with d in meters.
    pub fn edge_cost(&self, step_len: f64, to: usize) -> f64 {
        step_len * (1.0 + self.weight * self.cost[to] / 100.0)
    }

    /// Admissible successors of `id`: 8-connected, no corner cutting past
    /// lethal cells.
    pub fn neighbors(&self, id: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (i, j) = ((id % self.width) as i64, (id / self.width) as i64);
        MOVES.iter().filter_map(move |&(di, dj)| {
            let (ni, nj) = (i + di, j + dj);
            if self.blocked(ni, nj) {
                return None;
            }
            if di != 0 && dj != 0 && (self.blocked(i + di, j) || self.blocked(i, j + dj)) {
                return None;
            }
            let step = if di != 0 && dj != 0 {
                std::f64::consts::SQRT_2 * self.resolution
            } else {
                self.resolution
            };
            let to = nj as usize * self.width + ni as usize;
            Some((to, self.edge_cost(step, to)))
        })
    }
}

/// A* with Euclidean heuristic; ties broken on (f, h, cell index).
/// Returns the cell sequence and its total cost.
pub fn astar(grid: &CostGrid, start: usize, goal: usize) -> Option<(Vec<usize>, f64)> {
    let n = grid.width * grid.height;
    let center = |id: usize| {
        DVec2::new((id % grid.width) as f64, (id / grid.width) as f64) * grid.resolution
    };
    let goal_c = center(goal);
    let heur = |id: usize| center(id).distance(goal_c);
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[start] = 0.0;
    let h0 = heur(start);
    open.push(Reverse((OrderedFloat(h0), OrderedFloat(h0), start)));
    while let Some(Reverse((_, _, id))) = open.pop() {
        if closed[id] {
            continue;
        }
        closed[id] = true;
        if id == goal {
            let mut cells = vec![goal];
            let mut c = goal;
            while c != start {
                c = parent[c];
                cells.push(c);
            }
            cells.reverse();
            return Some((cells, g[goal]));
        }
        for (to, w) in grid.neighbors(id) {
            if closed[to] {
                continue;
            }
            let cand = g[id] + w;
            if cand < g[to] {
                g[to] = cand;
                parent[to] = id;
                let h = heur(to);
                open.push(Reverse((OrderedFloat(cand + h), OrderedFloat(h), to)));
            }
        }
    }
    None
}

/// Cheapest start-to-goal cost by exhaustive Dijkstra (linear scan for the
/// minimum, no heap and no heuristic).
pub fn dijkstra_cost(grid: &CostGrid, start: usize, goal: usize) -> Option<f64> {
    let n = grid.width * grid.height;
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[start] = 0.0;
    loop {
        let mut best = None;
        for id in 0..n {
            if !done[id] && dist[id].is_finite() && best.is_none_or(|b: usize| dist[id] < dist[b]) {
                best = Some(id);
            }
        }
        let u = best?;
        if u == goal {
            return Some(dist[u]);
        }
        done[u] = true;
        for (to, w) in grid.neighbors(u) {
            if dist[u] + w < dist[to] {
                dist[to] = dist[u] + w;
            }
        }
    }
}

fn request_cells(req: &PlanRequest) -> Result<(usize, usize), PlanError> {
    let map = req.costmap;
    let (si, sj) = map.cell_of(req.start).ok_or(PlanError::OutOfMap)?;
    let (gi, gj) = map.cell_of(req.goal).ok_or(PlanError::OutOfMap)?;
    let (s, g) = (map.index(si, sj), map.index(gi, gj));
    if let Some(m) = req.lethal {
        if m[s] || m[g] {
            return Err(PlanError::Lethal);
        }
    }
    Ok((s, g))
}

fn cost_grid<'a>(req: &'a PlanRequest, cost: &'a [f64]) -> CostGrid<'a> {
    CostGrid {
        width: req.costmap.width,
        height: req.costmap.height,
        resolution: req.costmap.resolution,
        cost,
        lethal: req.lethal,
        weight: req.weight,
    }
}

/// Plans on `cost` (one value per costmap cell, nominally the averaged
/// costmap) rather than on the map's own integer values.
pub fn plan_with_costs(req: &PlanRequest, cost: &[f64]) -> Result<PlannedPath, PlanError> {
    let (s, g) = request_cells(req)?;
    let grid = cost_grid(req, cost);
    let (cells, total) = astar(&grid, s, g).ok_or(PlanError::NoPath)?;
    let map = req.costmap;
    let ij: Vec<(usize, usize)> = cells
        .iter()
        .map(|&c| (c % map.width, c / map.width))
        .collect();
    let waypoints: Vec<[f64; 2]> = ij
        .iter()
        .map(|&(i, j)| map.cell_center(i, j).to_array())
        .collect();
    let length = waypoints
        .windows(2)
        .map(|w| DVec2::from_array(w[0]).distance(DVec2::from_array(w[1])))
        .sum();
    let peak_cost = cells.iter().map(|&c| cost[c]).fold(0.0, f64::max);
    Ok(PlannedPath {
        waypoints,
        cells: ij,
        length,
        cost: total,
        predicted_peak: map.to_irradiance(peak_cost),
    })
}

pub fn plan(req: &PlanRequest) -> Result<PlannedPath, PlanError> {
    let cost: Vec<f64> = req.costmap.values.iter().map(|&v| v as f64).collect();
    plan_with_costs(req, &cost)
}

/// Whether A* and the exhaustive oracle agree on the optimal cost (to
/// floating summation order, 1e-9 relative) or both find no path.
pub fn verify_optimal(req: &PlanRequest) -> bool {
    let cost: Vec<f64> = req.costmap.values.iter().map(|&v| v as f64).collect();
    let Ok((s, g)) = request_cells(req) else {
        return false;
    };
    let grid = cost_grid(req, &cost);
    match (astar(&grid, s, g), dijkstra_cost(&grid, s, g)) {
        (Some((_, a)), Some(d)) => (a - d).abs() <= 1e-9 * d.max(1.0),
        (None, None) => true,
        _ => false,
    }
}

/// Dose along a trajectory sampled once per fire step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseReport {
    /// kJ/m^2
    pub dose: f64,
    /// kW/m^2
    pub peak_irradiance: f64,
    /// s
    pub duration: f64,
    /// (t_k, q(t_k)) in s and kW/m^2.
    pub samples: Vec<(f64, f64)>,
}

/// `sum_k q(t_k) (t_{k+1} - t_k)` with `t_K = end`.
pub fn riemann_dose(samples: &[(f64, f64)], end: f64) -> f64 {
    let mut d = 0.0;
    for (k, &(t, q)) in samples.iter().enumerate() {
        let next = samples.get(k + 1).map_or(end, |s| s.0);
        d += q * (next - t);
    }
    d
}

impl DoseReport {
    pub fn from_samples(samples: Vec<(f64, f64)>, duration: f64) -> Self {
        let dose = riemann_dose(&samples, duration);
        let peak = samples.iter().map(|s| s.1).fold(0.0, f64::max);
        DoseReport {
            dose,
            peak_irradiance: peak,
            duration,
            samples,
        }
    }
}

/// Pose at arc length `s` along a polyline, facing along the current
/// segment.
pub fn pose_along(waypoints: &[[f64; 2]], s: f64) -> Pose2 {
    let mut left = s.max(0.0);
    for w in waypoints.windows(2) {
        let (a, b) = (DVec2::from_array(w[0]), DVec2::from_array(w[1]));
        let seg = a.distance(b);
        let yaw = (b - a).to_angle();
        if left <= seg || seg == 0.0 && left == 0.0 {
            let p = a + (b - a) * (left / seg.max(f64::MIN_POSITIVE));
            return Pose2::new(p.x, p.y, yaw);
        }
        left -= seg;
    }
    let n = waypoints.len();
    let last = DVec2::from_array(waypoints[n - 1]);
    let yaw = if n >= 2 {
        (last - DVec2::from_array(waypoints[n - 2])).to_angle()
    } else {
        0.0
    };
    Pose2::new(last.x, last.y, yaw)
}

/// Something that advances the fire by one frame with the walking sensor
/// placed at `pose` and reports its irradiance reading (kW/m^2).
pub trait IrradianceProbe {
    fn frame_dt(&self) -> f64;
    fn sample(&mut self, pose: Pose2) -> f64;
}

/// Moves the sensor along the path at constant `speed`, one sample per
/// fire step, and integrates the dose.
pub fn sensor_walk(
    path: &PlannedPath,
    speed: f64,
    probe: &mut dyn IrradianceProbe,
) -> Result<DoseReport, PlanError> {
    if path.waypoints.is_empty() {
        return Err(PlanError::EmptyPath);
    }
    let dt = probe.frame_dt();
    let duration = path.length / speed;
    let mut samples = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 * dt;
        if t >= duration && k > 0 {
            break;
        }
        let q = probe.sample(pose_along(&path.waypoints, t * speed));
        samples.push((t, q));
        k += 1;
        if duration == 0.0 {
            break;
        }
    }
    Ok(DoseReport::from_samples(samples, duration))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(w: usize, h: usize) -> ThermalCostmap {
        ThermalCostmap::new(w, h, 0.4, [0.0, 0.0], 83.0)
    }

    #[test]
    fn zero_weight_gives_octile_distance() {
        let map = flat(10, 10);
        let req = PlanRequest {
            start: map.cell_center(0, 0),
            goal: map.cell_center(7, 3),
            weight: 0.0,
            costmap: &map,
            lethal: None,
        };
        let p = plan(&req).unwrap();
        let octile = 0.4 * (4.0 + 3.0 * std::f64::consts::SQRT_2);
        assert!((p.length - octile).abs() < 1e-12);
        assert!((p.cost - p.length).abs() < 1e-12);
    }

    #[test]
    fn edge_cost_example() {
        let cost = [100.0];
        let g = CostGrid {
            width: 1,
            height: 1,
            resolution: 0.4,
            cost: &cost,
            lethal: None,
            weight: 5.0,
        };
        assert!((g.edge_cost(0.4, 0) - 2.4).abs() < 1e-15);
    }

    #[test]
    fn walls_block_and_no_corner_cutting() {
        let map = flat(3, 3);
        // wall column at i = 1 except the top cell
        let mut lethal = vec![false; 9];
        lethal[map.index(1, 0)] = true;
        lethal[map.index(1, 1)] = true;
        let req = PlanRequest {
            start: map.cell_center(0, 0),
            goal: map.cell_center(2, 0),
            weight: 0.0,
            costmap: &map,
            lethal: Some(&lethal),
        };
        let p = plan(&req).unwrap();
        // diagonals past the wall corners are refused
        assert_eq!(
            p.cells,
            [(0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0)]
        );
        let mut sealed = lethal.clone();
        sealed[map.index(1, 2)] = true;
        let req = PlanRequest {
            lethal: Some(&sealed),
            ..req
        };
        assert_eq!(plan(&req).unwrap_err(), PlanError::NoPath);
        assert!(verify_optimal(&req));
    }

    #[test]
    fn single_row_corridor() {
        let mut map = flat(12, 1);
        map.values = (0..12).map(|i| (i * 7 % 101) as u8).collect();
        let req = PlanRequest {
            start: map.cell_center(0, 0),
            goal: map.cell_center(11, 0),
            weight: 5.0,
            costmap: &map,
            lethal: None,
        };
        assert!(verify_optimal(&req));
        assert_eq!(plan(&req).unwrap().cells.len(), 12);
    }

    #[test]
    fn pose_along_interpolates_and_faces_forward() {
        let wp = [[0.0, 0.0], [1.0, 0.0], [1.0, 2.0]];
        let p = pose_along(&wp, 0.5);
        assert_eq!((p.x, p.y, p.yaw), (0.5, 0.0, 0.0));
        let p = pose_along(&wp, 2.0);
        assert!((p.y - 1.0).abs() < 1e-12 && (p.yaw - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let p = pose_along(&wp, 10.0);
        assert_eq!((p.x, p.y), (1.0, 2.0));
    }

    #[test]
    fn riemann_sum_uses_end_time() {
        let s = [(0.0, 1.0), (1.0, 2.0), (2.5, 4.0)];
        assert_eq!(riemann_dose(&s, 3.0), 1.0 + 3.0 + 2.0);
    }
}
