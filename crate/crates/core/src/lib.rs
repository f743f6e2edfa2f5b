//! Collision-free, sway-damping model predictive control for a hydraulic
//! forestry crane.
//!
//! * [`crane`] : kinematics, rigid-body dynamics, actuator and pump-flow models
//! * [`edf`] : voxel occupancy grid with a truncated Euclidean distance field
//! * [`collision`] : sphere decomposition of boom, arm and gripper
//! * [`reference`] : cubic-spline joint reference
//! * [`mpc`] : penalty-relaxed optimal control problem and its solver
//! * [`sim`] : closed-loop plant simulation, run logs and metrics

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collision;
pub mod crane;
pub mod dual;
pub mod edf;
pub mod error;
pub mod mpc;
pub mod reference;
pub mod sim;

pub use error::{Error, Result};
