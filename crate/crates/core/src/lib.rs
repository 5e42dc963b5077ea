//! Fire and thermal-radiation co-simulation coupled to a kinematic robot
//! simulator over a non-blocking message bus.

pub mod bc;
pub mod bridge;
pub mod cosim;
pub mod costmap;
pub mod experiments;
pub mod fire;
pub mod geometry;
pub mod planner;
pub mod radiation;
pub mod reactive;
pub mod realtime;
pub mod render;
pub mod robot;
pub mod scenario;
