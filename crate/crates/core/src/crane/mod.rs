//! Kinematic and dynamic model of the 7-DOF forestry crane.
//!
//! Joint order is `[slew, inner boom, outer boom, telescope, rotator, pendulum x,
//! pendulum y]`. The first five joints are hydraulically actuated, the last two
//! are the passive pendulum axes at the arm tip that carry the gripper.

mod dynamics;
mod hydraulics;
mod kinematics;

pub use dynamics::{
    actuator_jerk, bias_forces, gravity_forces, inverse_dynamics, mass_matrix, passive_blocks,
    passive_equilibrium, pendulum_accel, pendulum_period, state_derivative, state_jacobians,
    MassMatrix, PassiveBlocks, StateJacobians,
};
pub use hydraulics::{pump_flow, pump_flow_gradient};
pub use kinematics::{forward_kinematics, joint_frames, point_jacobian, JointFrame};

use nalgebra::{Matrix3, Rotation3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_JOINTS: usize = 7;
pub const N_ACTUATED: usize = 5;
pub const N_PASSIVE: usize = 2;
pub const STATE_DIM: usize = 19;

pub type Vec7 = SVector<f64, N_JOINTS>;
pub type Vec5 = SVector<f64, N_ACTUATED>;
pub type Vec2 = SVector<f64, N_PASSIVE>;
pub type StateVec = SVector<f64, STATE_DIM>;
pub type Mat7 = SMatrix<f64, N_JOINTS, N_JOINTS>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// One joint of the serial chain. The joint frame is the parent link frame
/// moved by the fixed offset; the joint then rotates about (or slides along)
/// `axis`, expressed in that joint frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Joint {
    pub kind: JointKind,
    pub axis: Vector3<f64>,
    pub offset: Vector3<f64>,
    #[serde(default = "Rotation3::identity")]
    pub offset_rotation: Rotation3<f64>,
}

/// Mass properties of a link, expressed in its own frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkInertia {
    pub mass: f64,
    pub com: Vector3<f64>,
    /// Rotational inertia about the center of mass.
    pub inertia: Matrix3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CraneParams {
    pub joints: Vec<Joint>,
    pub links: Vec<LinkInertia>,
    pub gravity: Vector3<f64>,
    pub actuator_omega: Vec5,
    pub actuator_damping: Vec5,
    pub cylinder_area_pos: Vec5,
    pub cylinder_area_neg: Vec5,
    pub cylinder_gain: Vec5,
    pub q_min: Vec7,
    pub q_max: Vec7,
    pub qdd_a_min: Vec5,
    pub qdd_a_max: Vec5,
    pub u_max: Vec5,
    pub q_flow_max: f64,
    pub telescope_index: usize,
    /// Viscous damping on the passive joints (N·m·s/rad).
    #[serde(default)]
    pub passive_damping: f64,
}

fn revolute(axis: [f64; 3], offset: [f64; 3]) -> Joint {
    Joint {
        kind: JointKind::Revolute,
        axis: Vector3::from(axis),
        offset: Vector3::from(offset),
        offset_rotation: Rotation3::identity(),
    }
}

fn link(mass: f64, com: [f64; 3], inertia: [f64; 3]) -> LinkInertia {
    LinkInertia {
        mass,
        com: Vector3::from(com),
        inertia: Matrix3::from_diagonal(&Vector3::from(inertia)),
    }
}

impl Default for CraneParams {
    /// Forwarder-scale fixture: 2 m column, 4 m inner boom, 3 m outer boom
    /// with a 0–2.5 m telescope, rotator at the tip, and a gripper hanging
    /// from a two-axis cardan joint (center of mass 0.9 m below the pivot).
    fn default() -> Self {
        let joints = vec![
            revolute([0.0, 0.0, 1.0], [0.0, 0.0, 0.0]),
            revolute([0.0, -1.0, 0.0], [0.0, 0.0, 2.0]),
            revolute([0.0, -1.0, 0.0], [4.0, 0.0, 0.0]),
            Joint {
                kind: JointKind::Prismatic,
                axis: Vector3::x(),
                offset: Vector3::zeros(),
                offset_rotation: Rotation3::identity(),
            },
            revolute([0.0, 0.0, 1.0], [3.0, 0.0, 0.0]),
            revolute([1.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
            revolute([0.0, 1.0, 0.0], [0.0, 0.0, 0.0]),
        ];
        let links = vec![
            link(900.0, [0.0, 0.0, 1.0], [300.0, 300.0, 150.0]),
            link(400.0, [2.0, 0.0, 0.0], [10.0, 540.0, 540.0]),
            link(250.0, [1.5, 0.0, 0.0], [6.0, 190.0, 190.0]),
            link(120.0, [2.0, 0.0, 0.0], [2.0, 60.0, 60.0]),
            link(40.0, [0.0, 0.0, -0.1], [0.5, 0.5, 0.5]),
            link(10.0, [0.0, 0.0, 0.0], [0.2, 0.2, 0.2]),
            link(180.0, [0.0, 0.0, -0.9], [12.0, 12.0, 4.0]),
        ];
        let pi = std::f64::consts::PI;
        Self {
            joints,
            links,
            gravity: Vector3::new(0.0, 0.0, -9.81),
            actuator_omega: Vec5::repeat(6.0),
            actuator_damping: Vec5::repeat(0.9),
            cylinder_area_pos: Vec5::new(0.008, 0.012, 0.010, 0.004, 0.002),
            cylinder_area_neg: Vec5::new(0.0048, 0.0072, 0.006, 0.0024, 0.0012),
            cylinder_gain: Vec5::new(0.3, 0.35, 0.3, 1.0, 0.05),
            q_min: Vec7::from([-pi, -0.2, -2.6, 0.0, -pi, -1.2, -1.2]),
            q_max: Vec7::from([pi, 1.3, 0.4, 2.5, pi, 1.2, 1.2]),
            qdd_a_min: -Vec5::new(0.6, 0.5, 0.5, 0.8, 1.5),
            qdd_a_max: Vec5::new(0.6, 0.5, 0.5, 0.8, 1.5),
            u_max: Vec5::new(0.5, 0.3, 0.3, 0.5, 1.0),
            q_flow_max: 0.003,
            telescope_index: 3,
            passive_damping: 0.02,
        }
    }
}

impl CraneParams {
    /// Checks every structural and physical invariant of the parameter set.
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if self.joints.len() != N_JOINTS {
            issues.push(format!("expected {N_JOINTS} joints, got {}", self.joints.len()));
        }
        if self.links.len() != N_JOINTS {
            issues.push(format!("expected {N_JOINTS} links, got {}", self.links.len()));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                issues.push(format!("joint {}: axis is not a unit vector", i + 1));
            }
            if !j.offset.iter().all(|x| x.is_finite()) {
                issues.push(format!("joint {}: non-finite offset", i + 1));
            }
            let expect = if i == self.telescope_index {
                JointKind::Prismatic
            } else {
                JointKind::Revolute
            };
            if j.kind != expect {
                issues.push(format!("joint {}: expected {:?}", i + 1, expect));
            }
        }
        if self.telescope_index >= N_ACTUATED {
            issues.push("telescope_index must refer to an actuated joint".into());
        }
        for (i, l) in self.links.iter().enumerate() {
            if !(l.mass > 0.0 && l.mass.is_finite()) {
                issues.push(format!("link {}: mass must be positive", i + 1));
            }
            let sym = (l.inertia - l.inertia.transpose()).abs().max();
            if sym > 1e-9 * l.inertia.abs().max().max(1.0) {
                issues.push(format!("link {}: inertia tensor is not symmetric", i + 1));
            } else {
                let eig = l.inertia.symmetric_eigenvalues();
                if eig.min() <= 0.0 {
                    issues.push(format!("link {}: inertia tensor is not positive definite", i + 1));
                }
            }
        }
        for i in 0..N_JOINTS {
            if !(self.q_min[i] < self.q_max[i]) {
                issues.push(format!("joint {}: q_min must be below q_max", i + 1));
            }
        }
        for l in 0..N_ACTUATED {
            let n = l + 1;
            if !(self.qdd_a_min[l] < 0.0 && self.qdd_a_max[l] > 0.0) {
                issues.push(format!("joint {n}: acceleration limits must bracket zero"));
            }
            if !(self.actuator_omega[l] > 0.0) {
                issues.push(format!("joint {n}: actuator_omega must be positive"));
            }
            if !(self.actuator_damping[l] > 0.0) {
                issues.push(format!("joint {n}: actuator_damping must be positive"));
            }
            if !(self.cylinder_area_pos[l] > 0.0 && self.cylinder_area_neg[l] > 0.0) {
                issues.push(format!("joint {n}: cylinder areas must be positive"));
            }
            if !(self.cylinder_gain[l] > 0.0) {
                issues.push(format!("joint {n}: cylinder_gain must be positive"));
            }
            if !(self.u_max[l] > 0.0) {
                issues.push(format!("joint {n}: u_max must be positive"));
            }
        }
        if !(self.q_flow_max > 0.0) {
            issues.push("q_flow_max must be positive".into());
        }
        if !(self.passive_damping >= 0.0) {
            issues.push("passive_damping must be non-negative".into());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(issues.join("; ")))
        }
    }
}

/// Full plant state `x = [q, q̇, q̈_A]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CraneState {
    pub q: Vec7,
    pub qd: Vec7,
    pub qdd_a: Vec5,
}

impl CraneState {
    pub fn at_rest(q: Vec7) -> Self {
        Self { q, qd: Vec7::zeros(), qdd_a: Vec5::zeros() }
    }

    pub fn q_a(&self) -> Vec5 {
        self.q.fixed_rows::<N_ACTUATED>(0).into_owned()
    }

    pub fn q_p(&self) -> Vec2 {
        self.q.fixed_rows::<N_PASSIVE>(N_ACTUATED).into_owned()
    }

    pub fn qd_a(&self) -> Vec5 {
        self.qd.fixed_rows::<N_ACTUATED>(0).into_owned()
    }

    pub fn qd_p(&self) -> Vec2 {
        self.qd.fixed_rows::<N_PASSIVE>(N_ACTUATED).into_owned()
    }

    pub fn to_vector(&self) -> StateVec {
        let mut x = StateVec::zeros();
        x.fixed_rows_mut::<7>(0).copy_from(&self.q);
        x.fixed_rows_mut::<7>(7).copy_from(&self.qd);
        x.fixed_rows_mut::<5>(14).copy_from(&self.qdd_a);
        x
    }

    pub fn from_vector(x: &StateVec) -> Self {
        Self {
            q: x.fixed_rows::<7>(0).into_owned(),
            qd: x.fixed_rows::<7>(7).into_owned(),
            qdd_a: x.fixed_rows::<5>(14).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qd.iter()).chain(self.qdd_a.iter()).all(|v| v.is_finite())
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidState("non-finite entry".into()))
        }
    }
}

/// Composes an actuated and a passive joint vector into a full `q`.
pub fn join_q(q_a: &Vec5, q_p: &Vec2) -> Vec7 {
    let mut q = Vec7::zeros();
    q.fixed_rows_mut::<5>(0).copy_from(q_a);
    q.fixed_rows_mut::<2>(5).copy_from(q_p);
    q
}
