//! Kinematic planar robot, its forward camera and the depth/RGB renderer
//! over the axis-box scene.

use glam::{DQuat, DVec2, DVec3};
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, AxisBox, BoxKind};
use crate::radiation::Pose2;
use crate::scenario::BODY_HEIGHT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotParams {
    /// Robot loop rate, Hz.
    pub rate_hz: f64,
    /// Cruise speed, m/s.
    pub speed: f64,
    /// Half side of the square collision footprint, m.
    pub half_width: f64,
    /// Camera loop rate, Hz.
    pub camera_rate_hz: f64,
    pub camera_width: u32,
    pub camera_height: u32,
    /// Horizontal field of view, degrees.
    pub camera_hfov: f64,
    /// Camera height above the ground, m.
    pub camera_mount_height: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            rate_hz: 100.0,
            speed: 1.0,
            half_width: 0.3,
            camera_rate_hz: 15.0,
            camera_width: 320,
            camera_height: 240,
            camera_hfov: 90.0,
            camera_mount_height: BODY_HEIGHT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// rad, wrapped to (-pi, pi]
    pub heading: f64,
    /// m/s
    pub speed: f64,
    /// s
    pub stamp: f64,
}

impl RobotState {
    pub fn at(p: DVec2, heading: f64) -> Self {
        Self {
            x: p.x,
            y: p.y,
            heading: wrap_angle(heading),
            speed: 0.0,
            stamp: 0.0,
        }
    }

    pub fn position(&self) -> DVec2 {
        DVec2::new(self.x, self.y)
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Command {
    Stop,
    /// Unicycle command: forward speed (m/s) and turn rate (rad/s).
    Twist {
        linear: f64,
        angular: f64,
    },
    /// Face `heading` (rad) and drive at `speed`.
    Heading {
        heading: f64,
        speed: f64,
    },
    /// World-frame planar velocity (m/s) keeping the current heading.
    Velocity {
        vx: f64,
        vy: f64,
    },
}

impl Command {
    /// Drive along a planar velocity vector at `speed`.
    pub fn along(v: DVec2, speed: f64) -> Command {
        if v.length_squared() == 0.0 {
            Command::Stop
        } else {
            Command::Heading {
                heading: v.to_angle(),
                speed,
            }
        }
    }
}

/// Static collision world: blocking boxes plus the domain rectangle.
#[derive(Debug, Clone)]
pub struct Footprint {
    pub half: f64,
    pub boxes: Vec<AxisBox>,
    pub domain: DVec2,
}

impl Footprint {
    pub fn new(half: f64, scene: &[AxisBox], domain: DVec2) -> Self {
        Self {
            half,
            boxes: scene
                .iter()
                .copied()
                .filter(|b| b.kind.blocks_robot())
                .collect(),
            domain,
        }
    }

    pub fn collides(&self, p: DVec2) -> bool {
        self.boxes.iter().any(|b| b.overlaps_square(p, self.half))
    }

    /// Moves from `from` by `delta`, one axis at a time, stopping flush
    /// against any blocking face or the domain edge.
    pub fn slide(&self, from: DVec2, delta: DVec2) -> DVec2 {
        let mut p = from;
        for axis in 0..2 {
            let d = delta[axis];
            if d == 0.0 {
                continue;
            }
            let mut target = p[axis] + d;
            let lo = self.half;
            let hi = self.domain[axis] - self.half;
            target = target.clamp(lo.min(hi), hi.max(lo));
            for b in &self.boxes {
                let other = 1 - axis;
                let (bmin, bmax) = (b.min[axis], b.max[axis]);
                let overlaps_other =
                    p[other] + self.half > b.min[other] && p[other] - self.half < b.max[other];
                if !overlaps_other {
                    continue;
                }
                if d > 0.0 && p[axis] + self.half <= bmin && target + self.half > bmin {
                    target = bmin - self.half;
                }
                if d < 0.0 && p[axis] - self.half >= bmax && target - self.half < bmax {
                    target = bmax + self.half;
                }
            }
            p[axis] = target;
        }
        p
    }
}

/// One kinematic step: unicycle integration followed by the collision
/// clamp.
pub fn tick(state: &RobotState, cmd: Command, dt: f64, world: &Footprint) -> RobotState {
    let (speed, heading, dir) = match cmd {
        Command::Stop => (0.0, state.heading, DVec2::ZERO),
        Command::Twist { linear, angular } => {
            let h = state.heading + angular * dt;
            (linear.max(0.0), h, DVec2::from_angle(h))
        }
        Command::Heading { heading, speed } => {
            (speed.max(0.0), heading, DVec2::from_angle(heading))
        }
        Command::Velocity { vx, vy } => {
            let v = DVec2::new(vx, vy);
            (v.length(), state.heading, v.normalize_or_zero())
        }
    };
    let heading = wrap_angle(heading);
    let delta = dir * (speed * dt);
    let p = world.slide(state.position(), delta);
    RobotState {
        x: p.x,
        y: p.y,
        heading,
        speed,
        stamp: state.stamp + dt,
    }
}

/// Pinhole camera; the optical axis is the body x axis, image x points to
/// the body's right and image y down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub position: [f64; 3],
    /// Body yaw, rad.
    pub yaw: f64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    pub fn mounted(state: &RobotState, params: &RobotParams) -> Self {
        let w = params.camera_width as f64;
        let f = (w / 2.0) / (params.camera_hfov.to_radians() / 2.0).tan();
        Self {
            position: [state.x, state.y, params.camera_mount_height],
            yaw: state.heading,
            fx: f,
            fy: f,
            cx: w / 2.0,
            cy: params.camera_height as f64 / 2.0,
            width: params.camera_width,
            height: params.camera_height,
        }
    }

    /// Camera at a published pose with the intrinsics of `params`.
    pub fn from_pose7(pose: [f64; 7], params: &RobotParams) -> Self {
        let q = DQuat::from_xyzw(pose[3], pose[4], pose[5], pose[6]);
        let f = q * DVec3::X;
        let mut cam = CameraModel::mounted(&RobotState::at(DVec2::ZERO, f.y.atan2(f.x)), params);
        cam.position = [pose[0], pose[1], pose[2]];
        cam
    }

    pub fn origin(&self) -> DVec3 {
        DVec3::from_array(self.position)
    }

    /// (forward, right, down) in world coordinates.
    pub fn axes(&self) -> (DVec3, DVec3, DVec3) {
        let (s, c) = self.yaw.sin_cos();
        (DVec3::new(c, s, 0.0), DVec3::new(s, -c, 0.0), DVec3::NEG_Z)
    }

    /// Ray direction through the center of pixel (u, v), scaled so its
    /// component along the optical axis is 1 (ray parameter = z-depth).
    pub fn pixel_ray(&self, u: u32, v: u32) -> DVec3 {
        let (f, r, d) = self.axes();
        let xc = (u as f64 + 0.5 - self.cx) / self.fx;
        let yc = (v as f64 + 0.5 - self.cy) / self.fy;
        f + r * xc + d * yc
    }

    /// Camera pose as published: position and body-yaw quaternion.
    pub fn pose7(&self) -> [f64; 7] {
        let q = DQuat::from_rotation_z(self.yaw);
        [
            self.position[0],
            self.position[1],
            self.position[2],
            q.x,
            q.y,
            q.z,
            q.w,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    /// z-depth along the optical axis, m; +inf where nothing is hit.
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn at(&self, u: u32, v: u32) -> f32 {
        self.data[(v * self.width + u) as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, u: u32, v: u32) -> [u8; 3] {
        let i = 3 * (v * self.width + u) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

fn nearest_box(scene: &[AxisBox], o: DVec3, d: DVec3) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, b) in scene.iter().enumerate() {
        if let Some(t) = b.ray_entry(o, d) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
    }
    best
}

/// z-depth of the nearest box along every pixel ray.
pub fn render_depth(scene: &[AxisBox], cam: &CameraModel) -> DepthImage {
    let mut data = Vec::with_capacity((cam.width * cam.height) as usize);
    let o = cam.origin();
    for v in 0..cam.height {
        for u in 0..cam.width {
            let d = cam.pixel_ray(u, v);
            data.push(nearest_box(scene, o, d).map_or(f32::INFINITY, |(t, _)| t as f32));
        }
    }
    DepthImage {
        width: cam.width,
        height: cam.height,
        data,
    }
}

fn base_color(kind: BoxKind) -> DVec3 {
    match kind {
        BoxKind::Wall => DVec3::new(170.0, 165.0, 150.0),
        BoxKind::Obstacle => DVec3::new(120.0, 95.0, 70.0),
        BoxKind::Floor => DVec3::new(90.0, 90.0, 95.0),
        BoxKind::Ceiling => DVec3::new(200.0, 200.0, 205.0),
    }
}

/// Flat-shaded view of the scene: boxes lit by an ambient term plus a
/// headlight term and dimmed with distance; ground plane and sky behind.
pub fn render_rgb(scene: &[AxisBox], cam: &CameraModel) -> RgbImage {
    let mut data = Vec::with_capacity((3 * cam.width * cam.height) as usize);
    let o = cam.origin();
    for v in 0..cam.height {
        for u in 0..cam.width {
            let d = cam.pixel_ray(u, v);
            let dn = d.normalize();
            let ground_t = if d.z < 0.0 { -o.z / d.z } else { f64::INFINITY };
            let color = match nearest_box(scene, o, d) {
                Some((t, i)) if t <= ground_t => {
                    let b = &scene[i];
                    let n = b.face_normal(o + d * t);
                    let lambert = n.dot(-dn).max(0.0);
                    let dist = t * d.length();
                    base_color(b.kind) * (0.35 + 0.65 * lambert) / (1.0 + 0.04 * dist)
                }
                _ if ground_t.is_finite() => {
                    let p = o + d * ground_t;
                    // faint 1 m checker on the ground
                    let check = ((p.x.floor() + p.y.floor()) as i64).rem_euclid(2) as f64;
                    DVec3::splat(70.0 + 12.0 * check) / (1.0 + 0.03 * ground_t * d.length())
                }
                _ => DVec3::new(150.0, 175.0, 205.0),
            };
            data.extend(color.to_array().map(|c| c.round().clamp(0.0, 255.0) as u8));
        }
    }
    RgbImage {
        width: cam.width,
        height: cam.height,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn open_world() -> Footprint {
        Footprint::new(0.3, &[], DVec2::new(20.0, 10.0))
    }

    #[test]
    fn zero_command_keeps_position() {
        let s = RobotState::at(DVec2::new(3.0, 4.0), 0.5);
        let n = tick(&s, Command::Stop, 0.01, &open_world());
        assert_eq!(n.position(), s.position());
        let n = tick(
            &s,
            Command::Twist {
                linear: 0.0,
                angular: 0.0,
            },
            0.01,
            &open_world(),
        );
        assert_eq!(n.position(), s.position());
    }

    #[test]
    fn euler_step() {
        let s = RobotState::at(DVec2::new(3.0, 4.0), 0.0);
        let n = tick(
            &s,
            Command::Twist {
                linear: 1.0,
                angular: 0.0,
            },
            0.1,
            &open_world(),
        );
        assert!((n.x - 3.1).abs() < 1e-12);
        assert_eq!(n.y, 4.0);
    }

    #[test]
    fn wall_stops_robot_at_its_face() {
        let wall = AxisBox::new(
            DVec3::new(5.0, 0.0, 0.0),
            DVec3::new(5.5, 10.0, 2.0),
            BoxKind::Wall,
        );
        let world = Footprint::new(0.3, &[wall], DVec2::new(20.0, 10.0));
        let mut s = RobotState::at(DVec2::new(3.0, 4.0), 0.0);
        for _ in 0..500 {
            s = tick(
                &s,
                Command::Heading {
                    heading: 0.0,
                    speed: 1.0,
                },
                0.01,
                &world,
            );
            assert!(!world.collides(s.position()));
        }
        assert!((s.x - 4.7).abs() < 1e-12);
    }

    #[test]
    fn heading_wraps() {
        let s = RobotState::at(DVec2::new(3.0, 4.0), 3.1);
        let n = tick(
            &s,
            Command::Twist {
                linear: 0.0,
                angular: 1.0,
            },
            0.1,
            &open_world(),
        );
        assert!(n.heading > -std::f64::consts::PI && n.heading < 0.0);
    }

    #[test]
    fn velocity_command_keeps_heading() {
        let s = RobotState::at(DVec2::new(3.0, 4.0), 0.7);
        let n = tick(
            &s,
            Command::Velocity { vx: 0.0, vy: -2.0 },
            0.1,
            &open_world(),
        );
        assert_eq!(n.heading, 0.7);
        assert!((n.position() - DVec2::new(3.0, 3.8)).length() < 1e-12);
        assert!((n.speed - 2.0).abs() < 1e-12);
    }

    #[test]
    fn depth_of_box_ahead() {
        let scene = [AxisBox::new(
            DVec3::new(5.0, -0.5, 0.0),
            DVec3::new(6.0, 0.5, 1.0),
            BoxKind::Obstacle,
        )];
        let s = RobotState::at(DVec2::new(0.0, 0.0), 0.0);
        let cam = CameraModel::mounted(&s, &RobotParams::default());
        let depth = render_depth(&scene, &cam);
        assert!((depth.at(160, 120) as f64 - 5.0).abs() < 1e-6);
        assert!(depth.at(0, 0).is_infinite());
    }

    #[test]
    fn empty_scene_depth_is_infinite() {
        let cam = CameraModel::mounted(
            &RobotState::at(DVec2::new(1.0, 1.0), 0.3),
            &RobotParams::default(),
        );
        assert!(render_depth(&[], &cam).data.iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn camera_inside_box_sees_zero_depth() {
        let scene = [AxisBox::new(
            DVec3::ZERO,
            DVec3::splat(2.0),
            BoxKind::Obstacle,
        )];
        let cam = CameraModel::mounted(
            &RobotState::at(DVec2::new(1.0, 1.0), 0.0),
            &RobotParams::default(),
        );
        assert!(render_depth(&scene, &cam).data.iter().all(|&d| d <= 1.0));
    }

    #[test]
    fn pose_quaternion_matches_heading() {
        let s = RobotState::at(DVec2::new(1.0, 2.0), FRAC_PI_2);
        let cam = CameraModel::mounted(&s, &RobotParams::default());
        let p = cam.pose7();
        let q = DQuat::from_xyzw(p[3], p[4], p[5], p[6]);
        let fwd = q * DVec3::X;
        assert!((fwd - DVec3::Y).length() < 1e-12);
        assert!((cam.axes().0 - fwd).length() < 1e-12);
    }

    #[test]
    fn camera_rebuilt_from_published_pose() {
        let params = RobotParams::default();
        let cam = CameraModel::mounted(&RobotState::at(DVec2::new(3.0, -1.0), -2.5), &params);
        let back = CameraModel::from_pose7(cam.pose7(), &params);
        assert!((back.yaw - cam.yaw).abs() < 1e-12);
        assert_eq!(back.position, cam.position);
        assert_eq!((back.fx, back.width), (cam.fx, cam.width));
    }
}
