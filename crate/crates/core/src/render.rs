//! Volumetric fire rendering from the robot camera and compositing over
//! the robot's RGB frame with depth occlusion.

use std::path::Path;

use glam::DVec3;
use thiserror::Error;

use crate::fire::FireGrid;
use crate::geometry::{ray_aabb, ray_aabb_exit};
use crate::robot::{CameraModel, DepthImage, RgbImage};

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("resolution mismatch: {0}x{1} vs {2}x{3}")]
    Resolution(u32, u32, u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    /// Mass-specific soot extinction, m^2/kg.
    pub soot_extinction: f64,
    /// Flame opacity at full blackbody weight, 1/m.
    pub flame_opacity: f64,
    /// March step as a fraction of the voxel size.
    pub step_fraction: f64,
    pub alpha_cutoff: f64,
    /// Color of lit smoke, 0..255.
    pub smoke_color: [f64; 3],
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            soot_extinction: 8700.0,
            flame_opacity: 4.0,
            step_fraction: 0.5,
            alpha_cutoff: 0.995,
            smoke_color: [95.0, 92.0, 90.0],
        }
    }
}

const BLACKBODY: [(f64, [f64; 3]); 6] = [
    (600.0, [90.0, 10.0, 0.0]),
    (800.0, [200.0, 40.0, 0.0]),
    (1000.0, [255.0, 110.0, 10.0]),
    (1200.0, [255.0, 170.0, 50.0]),
    (1400.0, [255.0, 220.0, 130.0]),
    (1700.0, [255.0, 250.0, 230.0]),
];

/// Flame color for temperature `t` (0..255 per channel) and its emission
/// weight in [0, 1]; zero below 600 K.
pub fn blackbody(t: f64) -> ([f64; 3], f64) {
    let (t0, _) = BLACKBODY[0];
    if t <= t0 {
        return ([0.0; 3], 0.0);
    }
    let weight = ((t - t0) / 400.0).min(1.0);
    let last = BLACKBODY[BLACKBODY.len() - 1];
    if t >= last.0 {
        return (last.1, weight);
    }
    let k = BLACKBODY.windows(2).position(|w| t < w[1].0).unwrap();
    let ((ta, ca), (tb, cb)) = (BLACKBODY[k], BLACKBODY[k + 1]);
    let f = (t - ta) / (tb - ta);
    (std::array::from_fn(|c| ca[c] + f * (cb[c] - ca[c])), weight)
}

/// Premultiplied fire color (0..255) and coverage per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FireImage {
    pub width: u32,
    pub height: u32,
    pub color: Vec<[f32; 3]>,
    pub alpha: Vec<f32>,
    pub source_seq: u64,
}

impl FireImage {
    pub fn empty(width: u32, height: u32, source_seq: u64) -> Self {
        let n = (width * height) as usize;
        FireImage {
            width,
            height,
            color: vec![[0.0; 3]; n],
            alpha: vec![0.0; n],
            source_seq,
        }
    }
}

/// Bounds of the voxels that can contribute anything, padded by one voxel.
fn active_bounds(grid: &FireGrid, emit_floor: f64, soot_floor: f64) -> Option<(DVec3, DVec3)> {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for id in 0..grid.len() {
        if grid.temperature[id] > emit_floor || grid.soot[id] > soot_floor {
            let c = grid.coords(id);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
            any = true;
        }
    }
    if !any {
        return None;
    }
    let h = grid.h;
    let e = grid.extent();
    let l = DVec3::from_array(lo.map(|v| v as f64 - 1.0)) * h;
    let u = DVec3::from_array(hi.map(|v| v as f64 + 2.0)) * h;
    Some((l.max(DVec3::ZERO), u.min(e)))
}

/// Marches every pixel ray front to back through the grid in steps of
/// `step_fraction * h`, stopping at the depth buffer or once coverage
/// exceeds the cutoff.
pub fn raymarch(
    grid: &FireGrid,
    cam: &CameraModel,
    depth: &DepthImage,
    params: &RenderParams,
    source_seq: u64,
) -> Result<FireImage, RenderError> {
    if depth.width != cam.width || depth.height != cam.height {
        return Err(RenderError::Resolution(
            cam.width,
            cam.height,
            depth.width,
            depth.height,
        ));
    }
    let mut img = FireImage::empty(cam.width, cam.height, source_seq);
    let soot_floor = 1e-4 / (params.soot_extinction * grid.h);
    let Some((lo, hi)) = active_bounds(grid, BLACKBODY[0].0, soot_floor) else {
        return Ok(img);
    };
    let o = cam.origin();
    let ambient = grid.ambient_temperature;
    let step = params.step_fraction * grid.h;
    for v in 0..cam.height {
        for u in 0..cam.width {
            let px = (v * cam.width + u) as usize;
            let d = cam.pixel_ray(u, v);
            let len = d.length();
            let dn = d / len;
            // distances along the unit ray
            let stop = depth.data[px] as f64 * len;
            let Some(enter) = ray_aabb(o, dn, lo, hi) else {
                continue;
            };
            let exit = ray_aabb_exit(o, dn, lo, hi);
            let end = exit.min(stop);
            let mut s = enter;
            let mut color = [0.0f64; 3];
            let mut alpha = 0.0f64;
            while s < end && alpha <= params.alpha_cutoff {
                let ds = step.min(end - s);
                let p = o + dn * (s + 0.5 * ds);
                let t = grid.sample_cell(&grid.temperature, p, ambient);
                let soot = grid.sample_cell(&grid.soot, p, 0.0).max(0.0);
                let (flame, weight) = blackbody(t);
                let k_smoke = params.soot_extinction * soot;
                let k_flame = params.flame_opacity * weight;
                let k = k_smoke + k_flame;
                if k > 0.0 {
                    let a = 1.0 - (-k * ds).exp();
                    let cover = (1.0 - alpha) * a;
                    for c in 0..3 {
                        color[c] +=
                            cover * (k_flame * flame[c] + k_smoke * params.smoke_color[c]) / k;
                    }
                    alpha += cover;
                }
                s += ds;
            }
            img.color[px] = color.map(|c| c as f32);
            img.alpha[px] = alpha.clamp(0.0, 1.0) as f32;
        }
    }
    Ok(img)
}

/// `out = fire + (1 - alpha) * rgb` with premultiplied fire color.
pub fn composite(rgb: &RgbImage, fire: &FireImage) -> Result<RgbImage, RenderError> {
    if rgb.width != fire.width || rgb.height != fire.height {
        return Err(RenderError::Resolution(
            rgb.width,
            rgb.height,
            fire.width,
            fire.height,
        ));
    }
    let mut data = Vec::with_capacity(rgb.data.len());
    for (px, bg) in rgb.data.chunks_exact(3).enumerate() {
        let a = fire.alpha[px];
        if a == 0.0 {
            data.extend_from_slice(bg);
            continue;
        }
        for c in 0..3 {
            let v = fire.color[px][c] + (1.0 - a) * bg[c] as f32;
            data.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(RgbImage {
        width: rgb.width,
        height: rgb.height,
        data,
    })
}

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> image::ImageResult<()> {
    image::save_buffer(
        path,
        &img.data,
        img.width,
        img.height,
        image::ExtendedColorType::Rgb8,
    )
}

/// Grayscale depth, near bright, `far` and beyond black.
pub fn write_depth_png(path: &Path, img: &DepthImage, far: f32) -> image::ImageResult<()> {
    let data: Vec<u8> = img
        .data
        .iter()
        .map(|&d| {
            if d.is_finite() {
                (255.0 * (1.0 - (d / far).min(1.0))).round() as u8
            } else {
                0
            }
        })
        .collect();
    image::save_buffer(
        path,
        &data,
        img.width,
        img.height,
        image::ExtendedColorType::L8,
    )
}

/// Straight-alpha RGBA of the fire layer alone.
pub fn write_fire_png(path: &Path, img: &FireImage) -> image::ImageResult<()> {
    let mut data = Vec::with_capacity(img.alpha.len() * 4);
    for (c, &a) in img.color.iter().zip(&img.alpha) {
        let un = if a > 0.0 { c.map(|v| v / a) } else { [0.0; 3] };
        data.extend(un.map(|v| v.round().clamp(0.0, 255.0) as u8));
        data.push((a * 255.0).round() as u8);
    }
    image::save_buffer(
        path,
        &data,
        img.width,
        img.height,
        image::ExtendedColorType::Rgba8,
    )
}
