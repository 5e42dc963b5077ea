//! Reactive hazard avoidance from four corner irradiance sensors.
//!
//! Each corner reading pushes the robot along the unit vector from that
//! sensor toward the body center, scaled by `q / q_max`; the sum is added
//! to a unit goal vector and normalized.

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::radiation::{Pose2, SensorReading};
use crate::scenario::SPOT_BODY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReactiveConfig {
    /// kW/m^2
    pub q_max: f64,
    /// m
    pub goal_tolerance: f64,
    /// m/s
    pub speed: f64,
    /// FL, FR, RR, RL.
    pub sensor_ids: [String; 4],
    /// Body-frame sensor offsets in the same order, m.
    pub offsets: [[f64; 2]; 4],
}

impl Default for ReactiveConfig {
    fn default() -> Self {
        let hx = SPOT_BODY[0] / 2.0;
        let hy = SPOT_BODY[1] / 2.0;
        Self {
            q_max: 0.4,
            goal_tolerance: 0.5,
            speed: 1.0,
            sensor_ids: ["FL", "FR", "RR", "RL"].map(String::from),
            offsets: [[hx, hy], [hx, -hy], [-hx, -hy], [-hx, hy]],
        }
    }
}

impl ReactiveConfig {
    /// Filtered readings of the four corner sensors in configured order;
    /// missing ids read as zero.
    pub fn pick(&self, readings: &[SensorReading]) -> [f64; 4] {
        std::array::from_fn(|i| {
            readings
                .iter()
                .find(|r| r.id == self.sensor_ids[i])
                .map_or(0.0, |r| r.filtered)
        })
    }
}

/// Unit goal vector, or zero at the goal.
pub fn goal_direction(pose: Pose2, goal: DVec2) -> DVec2 {
    (goal - pose.position()).normalize_or_zero()
}

/// Planar direction to drive: normalized sum of the corner repulsions and
/// the unit goal vector. Falls back to the goal vector when the sum
/// vanishes.
pub fn compute_velocity(
    readings: &[f64; 4],
    pose: Pose2,
    goal: DVec2,
    cfg: &ReactiveConfig,
) -> DVec2 {
    let v_t = goal_direction(pose, goal);
    let (s, c) = pose.yaw.sin_cos();
    let mut v = v_t;
    for (q, off) in readings.iter().zip(&cfg.offsets) {
        // sensor -> center is the negated, rotated body offset
        let to_center = -DVec2::new(c * off[0] - s * off[1], s * off[0] + c * off[1]);
        v += (q / cfg.q_max) * to_center.normalize();
    }
    let n = v.length();
    if n < 1e-9 {
        v_t
    } else {
        v / n
    }
}
