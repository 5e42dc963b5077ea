//! Axis-aligned scene boxes and the ray queries shared by the radiation
//! tracer, the depth renderer and the robot collision clamp.

use glam::{DQuat, DVec2, DVec3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxKind {
    Wall,
    Obstacle,
    Floor,
    Ceiling,
}

impl BoxKind {
    /// Whether the robot footprint may not overlap boxes of this kind.
    pub fn blocks_robot(self) -> bool {
        matches!(self, BoxKind::Wall | BoxKind::Obstacle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub kind: BoxKind,
}

impl AxisBox {
    pub fn new(min: DVec3, max: DVec3, kind: BoxKind) -> Self {
        Self {
            min: min.to_array(),
            max: max.to_array(),
            kind,
        }
    }

    pub fn lo(&self) -> DVec3 {
        DVec3::from_array(self.min)
    }

    pub fn hi(&self) -> DVec3 {
        DVec3::from_array(self.max)
    }

    pub fn contains(&self, p: DVec3) -> bool {
        let (lo, hi) = (self.lo(), self.hi());
        p.cmpge(lo).all() && p.cmple(hi).all()
    }

    /// Entry parameter of the ray `origin + t * dir` into the box, restricted
    /// to `t >= 0`. A ray starting inside the box hits at `t = 0`.
    pub fn ray_entry(&self, origin: DVec3, dir: DVec3) -> Option<f64> {
        ray_aabb(origin, dir, self.lo(), self.hi())
    }

    /// Outward normal of the face containing `p` (nearest face).
    pub fn face_normal(&self, p: DVec3) -> DVec3 {
        let (lo, hi) = (self.lo(), self.hi());
        let mut best = (f64::INFINITY, DVec3::Z);
        for axis in 0..3 {
            let dl = (p[axis] - lo[axis]).abs();
            let dh = (p[axis] - hi[axis]).abs();
            let mut n = DVec3::ZERO;
            if dl < best.0 {
                n[axis] = -1.0;
                best = (dl, n);
            }
            if dh < best.0 {
                let mut n = DVec3::ZERO;
                n[axis] = 1.0;
                best = (dh, n);
            }
        }
        best.1
    }

    /// Planar footprint overlap test against an axis-aligned square.
    pub fn overlaps_square(&self, center: DVec2, half: f64) -> bool {
        center.x + half > self.min[0]
            && center.x - half < self.max[0]
            && center.y + half > self.min[1]
            && center.y - half < self.max[1]
    }
}

/// Slab test. Returns the smallest `t >= 0` at which the ray is inside the
/// box, or `None` if it never is.
pub fn ray_aabb(origin: DVec3, dir: DVec3, lo: DVec3, hi: DVec3) -> Option<f64> {
    let mut t0 = 0.0_f64;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        let o = origin[axis];
        let d = dir[axis];
        if d == 0.0 {
            if o < lo[axis] || o > hi[axis] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let mut ta = (lo[axis] - o) * inv;
        let mut tb = (hi[axis] - o) * inv;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

/// Exit parameter of a ray that starts inside `[lo, hi]`.
pub fn ray_aabb_exit(origin: DVec3, dir: DVec3, lo: DVec3, hi: DVec3) -> f64 {
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        let d = dir[axis];
        if d > 0.0 {
            t1 = t1.min((hi[axis] - origin[axis]) / d);
        } else if d < 0.0 {
            t1 = t1.min((lo[axis] - origin[axis]) / d);
        }
    }
    t1.max(0.0)
}

/// Nearest `t >= 0` where the ray meets the sphere surface; a ray starting
/// inside hits at `t = 0`.
pub fn ray_sphere(origin: DVec3, dir: DVec3, center: DVec3, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let c = oc.length_squared() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let a = dir.length_squared();
    let b = oc.dot(dir);
    if b > 0.0 {
        return None;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    Some((-b - disc.sqrt()) / a)
}

/// Ray against an oriented box given by center, half extents and rotation.
pub fn ray_obb(
    origin: DVec3,
    dir: DVec3,
    center: DVec3,
    half: DVec3,
    orientation: DQuat,
) -> Option<f64> {
    let inv = orientation.inverse();
    let o = inv * (origin - center);
    let d = inv * dir;
    ray_aabb(o, d, -half, half)
}

/// Heading angle wrapped to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    if a > -PI && a <= PI {
        return a;
    }
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}
