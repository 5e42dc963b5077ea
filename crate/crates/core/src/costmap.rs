//! Ground-plane thermal costmap: per-frame irradiance normalized to
//! integer costs in [0, 100] and averaged over a ring of recent frames.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use glam::DVec2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostmapParams {
    /// m per cell
    pub resolution: f64,
    /// kW/m^2 mapped to cost 100.
    pub irradiance_scale: f64,
    /// Number of frames averaged.
    pub window: usize,
    /// Withhold the average until the window is full.
    pub strict_window: bool,
}

impl Default for CostmapParams {
    fn default() -> Self {
        Self {
            resolution: 0.4,
            irradiance_scale: 83.0,
            window: 60,
            strict_window: false,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("message truncated")]
    Truncated,
    #[error("data length {got} does not match {width}x{height}")]
    SizeMismatch { width: u32, height: u32, got: usize },
    #[error("frame id is not valid UTF-8")]
    FrameId,
    #[error("cell value {0} outside [0, 100]")]
    Range(i8),
}

/// `round(100 min(raw, scale) / scale)` per cell.
pub fn normalize_frame(raw: &[f64], scale: f64) -> Vec<u8> {
    raw.iter()
        .map(|&q| (100.0 * q.max(0.0).min(scale) / scale).round() as u8)
        .collect()
}

/// Rounded per-cell mean over the given frames.
pub fn temporal_average<'a, I>(frames: I) -> Vec<u8>
where
    I: IntoIterator<Item = &'a Vec<u8>>,
{
    let mut sum: Vec<u32> = Vec::new();
    let mut n = 0u32;
    for f in frames {
        if sum.is_empty() {
            sum = vec![0; f.len()];
        }
        for (s, &v) in sum.iter_mut().zip(f) {
            *s += v as u32;
        }
        n += 1;
    }
    if n == 0 {
        return sum.into_iter().map(|_| 0).collect();
    }
    // integer round-half-up of sum / n
    sum.into_iter()
        .map(|s| ((2 * s + n) / (2 * n)) as u8)
        .collect()
}

/// Averaged costmap on the ground plane; cell (i, j) covers
/// `origin + [i, i+1) x [j, j+1) * resolution`, row-major with x fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalCostmap {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: [f64; 2],
    pub values: Vec<u8>,
    pub irradiance_scale: f64,
}

impl ThermalCostmap {
    pub fn new(width: usize, height: usize, resolution: f64, origin: [f64; 2], scale: f64) -> Self {
        Self {
            width,
            height,
            resolution,
            origin,
            values: vec![0; width * height],
            irradiance_scale: scale,
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.values[self.index(i, j)]
    }

    pub fn cell_of(&self, p: DVec2) -> Option<(usize, usize)> {
        let q = (p - DVec2::from_array(self.origin)) / self.resolution;
        if q.x < 0.0 || q.y < 0.0 {
            return None;
        }
        let (i, j) = (q.x as usize, q.y as usize);
        (i < self.width && j < self.height).then_some((i, j))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> DVec2 {
        DVec2::from_array(self.origin) + (DVec2::new(i as f64, j as f64) + 0.5) * self.resolution
    }

    /// Irradiance (kW/m^2) corresponding to a cost value.
    pub fn to_irradiance(&self, cost: f64) -> f64 {
        cost / 100.0 * self.irradiance_scale
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for j in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|i| self.get(i, j).to_string())
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    }

    /// Binary PGM, top row = largest y.
    pub fn write_pgm(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(out, "P5\n{} {}\n100\n", self.width, self.height)?;
        for j in (0..self.height).rev() {
            let row: Vec<u8> = (0..self.width).map(|i| self.get(i, j)).collect();
            out.write_all(&row)?;
        }
        out.flush()
    }

    /// Local maxima (8-neighborhood, strictly above all neighbors or
    /// first in a plateau) above `floor`, sorted by x.
    pub fn local_maxima(&self, floor: u8) -> Vec<(usize, usize, u8)> {
        let mut out = Vec::new();
        for j in 0..self.height {
            for i in 0..self.width {
                let v = self.get(i, j);
                if v <= floor {
                    continue;
                }
                let mut is_max = true;
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (ni, nj) = (i as i64 + di, j as i64 + dj);
                        if ni < 0 || nj < 0 || ni >= self.width as i64 || nj >= self.height as i64 {
                            continue;
                        }
                        let n = self.get(ni as usize, nj as usize);
                        // plateau: keep the lowest-index cell only
                        let earlier = (nj, ni) < (j as i64, i as i64);
                        if n > v || (n == v && earlier) {
                            is_max = false;
                        }
                    }
                }
                if is_max {
                    out.push((i, j, v));
                }
            }
        }
        out.sort_by_key(|&(i, j, _)| (i, j));
        out
    }
}

/// Ring of normalized frames and the running average derived from it.
#[derive(Debug, Clone)]
pub struct CostmapAccumulator {
    pub params: CostmapParams,
    pub width: usize,
    pub height: usize,
    pub origin: [f64; 2],
    ring: VecDeque<Vec<u8>>,
}

impl CostmapAccumulator {
    pub fn new(params: CostmapParams, width: usize, height: usize, origin: [f64; 2]) -> Self {
        Self {
            params,
            width,
            height,
            origin,
            ring: VecDeque::new(),
        }
    }

    pub fn for_scenario(sc: &crate::scenario::Scenario) -> Self {
        let r = sc.costmap.resolution;
        let w = (sc.domain_size[0] / r).ceil() as usize;
        let h = (sc.domain_size[1] / r).ceil() as usize;
        Self::new(sc.costmap.clone(), w, h, [0.0, 0.0])
    }

    pub fn frames(&self) -> usize {
        self.ring.len()
    }

    /// Normalizes and stores one irradiance frame (kW/m^2 per cell).
    pub fn push_irradiance(&mut self, raw: &[f64]) {
        assert_eq!(raw.len(), self.width * self.height, "frame size");
        self.push_frame(normalize_frame(raw, self.params.irradiance_scale));
    }

    pub fn push_frame(&mut self, frame: Vec<u8>) {
        if self.ring.len() == self.params.window.max(1) {
            self.ring.pop_front();
        }
        self.ring.push_back(frame);
    }

    /// Averaged map, or `None` before the first frame (or before the window
    /// fills in strict mode).
    pub fn average(&self) -> Option<ThermalCostmap> {
        if self.ring.is_empty()
            || (self.params.strict_window && self.ring.len() < self.params.window)
        {
            return None;
        }
        let mut map = ThermalCostmap::new(
            self.width,
            self.height,
            self.params.resolution,
            self.origin,
            self.params.irradiance_scale,
        );
        map.values = temporal_average(&self.ring);
        Some(map)
    }
}

/// Occupancy-grid style wire message for a costmap.
///
/// Layout (little endian): `stamp f64`, `frame_id u32 length + UTF-8`,
/// `resolution f64`, `width u32`, `height u32`, `origin_x f64`,
/// `origin_y f64`, `width*height` int8 cells (row-major, x fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMessage {
    pub stamp: f64,
    pub frame_id: String,
    pub map: ThermalCostmap,
}

pub fn to_occupancy_message(map: &ThermalCostmap, stamp: f64, frame_id: &str) -> Vec<u8> {
    let mut b = Vec::with_capacity(48 + frame_id.len() + map.values.len());
    b.extend_from_slice(&stamp.to_le_bytes());
    b.extend_from_slice(&(frame_id.len() as u32).to_le_bytes());
    b.extend_from_slice(frame_id.as_bytes());
    b.extend_from_slice(&map.resolution.to_le_bytes());
    b.extend_from_slice(&(map.width as u32).to_le_bytes());
    b.extend_from_slice(&(map.height as u32).to_le_bytes());
    b.extend_from_slice(&map.origin[0].to_le_bytes());
    b.extend_from_slice(&map.origin[1].to_le_bytes());
    b.extend(map.values.iter().map(|&v| v as i8 as u8));
    b
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CodecError> {
        if self.buf.len() < n {
            return Err(CodecError::Truncated);
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }
    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Decodes a message; the irradiance scale is not on the wire and is
/// taken from `scale`.
pub fn from_occupancy_message(bytes: &[u8], scale: f64) -> Result<OccupancyMessage, CodecError> {
    let mut r = Reader { buf: bytes };
    let stamp = r.f64()?;
    let n = r.u32()? as usize;
    let frame_id = std::str::from_utf8(r.take(n)?)
        .map_err(|_| CodecError::FrameId)?
        .to_string();
    let resolution = r.f64()?;
    let width = r.u32()?;
    let height = r.u32()?;
    let ox = r.f64()?;
    let oy = r.f64()?;
    let data = r.buf;
    if data.len() != width as usize * height as usize {
        return Err(CodecError::SizeMismatch {
            width,
            height,
            got: data.len(),
        });
    }
    let mut values = Vec::with_capacity(data.len());
    for &b in data {
        let v = b as i8;
        if !(0..=100).contains(&v) {
            return Err(CodecError::Range(v));
        }
        values.push(v as u8);
    }
    Ok(OccupancyMessage {
        stamp,
        frame_id,
        map: ThermalCostmap {
            width: width as usize,
            height: height as usize,
            resolution,
            origin: [ox, oy],
            values,
            irradiance_scale: scale,
        },
    })
}

/// Black, red, yellow, white ramp for a cost in [0, 100].
pub fn heat_color(cost: u8) -> [u8; 3] {
    let t = cost.min(100) as f64 / 100.0;
    let c = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [c(3.0 * t), c(3.0 * t - 1.0), c(3.0 * t - 2.0)]
}

/// Something drawn over the costmap image, in world meters.
#[derive(Debug, Clone)]
pub enum Overlay {
    Path {
        points: Vec<[f64; 2]>,
        color: [u8; 3],
    },
    Circle {
        center: [f64; 2],
        radius: f64,
        color: [u8; 3],
    },
    Marker {
        at: [f64; 2],
        color: [u8; 3],
    },
}

/// Costmap as a heat image, `scale` pixels per cell, top row = largest y.
pub fn render_overlay(map: &ThermalCostmap, overlays: &[Overlay], scale: u32) -> image::RgbImage {
    let s = scale.max(1);
    let (w, h) = (map.width as u32 * s, map.height as u32 * s);
    let mut img = image::RgbImage::from_fn(w, h, |x, y| {
        let i = (x / s) as usize;
        let j = map.height - 1 - (y / s) as usize;
        image::Rgb(heat_color(map.get(i, j)))
    });
    let to_px = |p: [f64; 2]| -> (f64, f64) {
        let q = (DVec2::from_array(p) - DVec2::from_array(map.origin)) / map.resolution * s as f64;
        (q.x, h as f64 - q.y)
    };
    let mut put = |x: f64, y: f64, c: [u8; 3]| {
        if x >= 0.0 && y >= 0.0 && (x as u32) < w && (y as u32) < h {
            img.put_pixel(x as u32, y as u32, image::Rgb(c));
        }
    };
    for o in overlays {
        match o {
            Overlay::Path { points, color } => {
                for seg in points.windows(2) {
                    let (a, b) = (to_px(seg[0]), to_px(seg[1]));
                    let n = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
                    for k in 0..=n {
                        let f = k as f64 / n as f64;
                        let (x, y) = (a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1));
                        for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)] {
                            put(x + dx, y + dy, *color);
                        }
                    }
                }
            }
            Overlay::Circle {
                center,
                radius,
                color,
            } => {
                let (cx, cy) = to_px(*center);
                let r = radius / map.resolution * s as f64;
                let n = (r * 8.0).ceil().max(16.0) as usize;
                for k in 0..n {
                    let a = k as f64 / n as f64 * std::f64::consts::TAU;
                    put(cx + r * a.cos(), cy + r * a.sin(), *color);
                }
            }
            Overlay::Marker { at, color } => {
                let (cx, cy) = to_px(*at);
                for d in -3i32..=3 {
                    put(cx + d as f64, cy, *color);
                    put(cx, cy + d as f64, *color);
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn overlay_image_orientation_and_colors() {
        let mut map = ThermalCostmap::new(4, 2, 0.5, [0.0, 0.0], 1.0);
        let k = map.index(3, 1);
        map.values[k] = 100;
        let img = render_overlay(
            &map,
            &[Overlay::Marker {
                at: [0.25, 0.25],
                color: [0, 255, 0],
            }],
            8,
        );
        assert_eq!(img.dimensions(), (32, 16));
        // cell (3, 1) is the top-right corner of the image
        assert_eq!(img.get_pixel(31, 0).0, [255, 255, 255]);
        assert_eq!(img.get_pixel(20, 2).0, [0, 0, 0]);
        // marker at the center of cell (0, 0), bottom-left
        assert_eq!(img.get_pixel(4, 12).0, [0, 255, 0]);
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(
            normalize_frame(&[0.0, 83.0, 41.5, 200.0], 83.0),
            [0, 100, 50, 100]
        );
    }

    #[test]
    fn single_frame_window_is_identity() {
        let mut acc = CostmapAccumulator::new(
            CostmapParams {
                window: 1,
                ..Default::default()
            },
            3,
            1,
            [0.0, 0.0],
        );
        acc.push_frame(vec![1, 2, 3]);
        acc.push_frame(vec![7, 8, 9]);
        assert_eq!(acc.average().unwrap().values, [7, 8, 9]);
    }

    #[test]
    fn alternating_frames_average_to_half() {
        let frames: Vec<Vec<u8>> = (0..60)
            .map(|i| vec![if i % 2 == 0 { 0 } else { 100 }; 4])
            .collect();
        assert_eq!(temporal_average(&frames), [50; 4]);
    }

    #[test]
    fn warm_up_and_strict_window() {
        let mut acc = CostmapAccumulator::new(CostmapParams::default(), 2, 1, [0.0, 0.0]);
        assert!(acc.average().is_none());
        acc.push_frame(vec![10, 20]);
        acc.push_frame(vec![20, 40]);
        assert_eq!(acc.average().unwrap().values, [15, 30]);
        acc.params.strict_window = true;
        assert!(acc.average().is_none());
    }

    #[test]
    fn codec_rejects_size_mismatch() {
        let map = ThermalCostmap {
            values: vec![0, 50, 100, 25],
            ..ThermalCostmap::new(2, 2, 0.4, [0.0, 0.0], 83.0)
        };
        let mut bytes = to_occupancy_message(&map, 1.5, "map");
        let back = from_occupancy_message(&bytes, 83.0).unwrap();
        assert_eq!(back.map, map);
        assert_eq!(back.stamp, 1.5);
        bytes.pop();
        assert!(matches!(
            from_occupancy_message(&bytes, 83.0),
            Err(CodecError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn plateau_reports_one_maximum() {
        let mut map = ThermalCostmap::new(4, 3, 1.0, [0.0, 0.0], 83.0);
        let (a, b) = (map.index(1, 1), map.index(2, 1));
        map.values[a] = 9;
        map.values[b] = 9;
        assert_eq!(map.local_maxima(0), [(1, 1, 9)]);
    }

    proptest! {
        #[test]
        fn average_is_order_invariant(frames in prop::collection::vec(prop::collection::vec(0u8..=100, 5), 1..12), seed in any::<u64>()) {
            let mut shuffled = frames.clone();
            let n = shuffled.len();
            for i in 0..n {
                shuffled.swap(i, (seed as usize).wrapping_add(i * 7) % n);
            }
            prop_assert_eq!(temporal_average(&frames), temporal_average(&shuffled));
        }

        #[test]
        fn normalization_is_scale_free(raw in prop::collection::vec(0.0f64..200.0, 1..20), k_exp in -3i32..4) {
            let k = 2f64.powi(k_exp);
            let scaled: Vec<f64> = raw.iter().map(|x| x * k).collect();
            prop_assert_eq!(normalize_frame(&scaled, 83.0 * k), normalize_frame(&raw, 83.0));
        }

        #[test]
        fn codec_round_trips(w in 1usize..12, h in 1usize..12, seed in any::<u64>(), stamp in -1e6f64..1e6) {
            let values: Vec<u8> = (0..w * h).map(|i| ((seed >> (i % 60)) as usize + i) as u8 % 101).collect();
            let map = ThermalCostmap { values, ..ThermalCostmap::new(w, h, 0.4, [1.0, -2.0], 83.0) };
            let back = from_occupancy_message(&to_occupancy_message(&map, stamp, "thermal"), 83.0).unwrap();
            prop_assert_eq!(back.map, map);
            prop_assert_eq!(back.stamp, stamp);
            prop_assert_eq!(back.frame_id, "thermal");
        }
    }
}
