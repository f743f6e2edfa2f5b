use nalgebra::{Isometry3, Matrix3, Rotation3, SMatrix, Translation3, UnitQuaternion, Vector3};

use super::{CraneParams, Joint, JointKind, Vec7, N_JOINTS};
use crate::dual::Real;

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub(crate) fn lift3<T: Real>(v: &Vector3<f64>) -> Vector3<T> {
    v.map(T::cst)
}

pub(crate) fn lift33<T: Real>(m: &Matrix3<f64>) -> Matrix3<T> {
    m.map(T::cst)
}

/// Rotation of the child frame relative to the parent and the child origin
/// expressed in the parent frame, for joint coordinate `q`.
pub(crate) fn joint_transform<T: Real>(joint: &Joint, q: T) -> (Matrix3<T>, Vector3<T>) {
    let r_off = joint.offset_rotation.matrix();
    match joint.kind {
        JointKind::Revolute => {
            let k = skew(&joint.axis);
            let k2 = k * k;
            let s = q.sin();
            let c1 = T::one() - q.cos();
            let rot = Matrix3::from_fn(|i, j| {
                let id = if i == j { 1.0 } else { 0.0 };
                T::cst(id) + s * T::cst(k[(i, j)]) + c1 * T::cst(k2[(i, j)])
            });
            (lift33::<T>(r_off) * rot, lift3(&joint.offset))
        }
        JointKind::Prismatic => {
            let dir = r_off * joint.axis;
            let p = lift3::<T>(&joint.offset) + lift3::<T>(&dir) * q;
            (lift33(r_off), p)
        }
    }
}

/// World-frame pose of one joint/link frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointFrame {
    pub rotation: Matrix3<f64>,
    pub origin: Vector3<f64>,
    /// Joint axis in world coordinates.
    pub axis: Vector3<f64>,
    pub kind: JointKind,
}

impl JointFrame {
    pub fn to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.origin + self.rotation * local
    }
}

pub fn joint_frames(params: &CraneParams, q: &Vec7) -> [JointFrame; N_JOINTS] {
    let mut rot = Matrix3::identity();
    let mut pos = Vector3::zeros();
    std::array::from_fn(|i| {
        let joint = &params.joints[i];
        let (r, p) = joint_transform::<f64>(joint, q[i]);
        pos += rot * p;
        // The axis is fixed in the joint frame, i.e. after the offset rotation.
        let axis = rot * (joint.offset_rotation * joint.axis);
        rot *= r;
        JointFrame { rotation: rot, origin: pos, axis, kind: joint.kind }
    })
}

/// World poses of the seven link frames. Pose `i` depends on `q[0..=i]` only.
pub fn forward_kinematics(params: &CraneParams, q: &Vec7) -> [Isometry3<f64>; N_JOINTS] {
    joint_frames(params, q).map(|f| {
        let rot = Rotation3::from_matrix_unchecked(f.rotation);
        Isometry3::from_parts(Translation3::from(f.origin), UnitQuaternion::from_rotation_matrix(&rot))
    })
}

/// Position Jacobian `∂p/∂q` of a world point rigidly attached to `link`.
pub fn point_jacobian(
    frames: &[JointFrame; N_JOINTS],
    link: usize,
    point: &Vector3<f64>,
) -> SMatrix<f64, 3, N_JOINTS> {
    let mut jac = SMatrix::<f64, 3, N_JOINTS>::zeros();
    for (j, f) in frames.iter().enumerate().take(link + 1) {
        let col = match f.kind {
            JointKind::Revolute => f.axis.cross(&(point - f.origin)),
            JointKind::Prismatic => f.axis,
        };
        jac.set_column(j, &col);
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_configuration_composes_offsets() {
        let p = CraneParams::default();
        let poses = forward_kinematics(&p, &Vec7::zeros());
        let mut acc = Vector3::zeros();
        for (i, pose) in poses.iter().enumerate() {
            acc += p.joints[i].offset;
            assert!((pose.translation.vector - acc).norm() < 1e-12);
            assert!(pose.rotation.angle() < 1e-12);
        }
        // arm tip sits 2 m up, 4 + 3 m out
        assert!((poses[6].translation.vector - Vector3::new(7.0, 0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn slew_by_pi_mirrors_downstream_origins() {
        let p = CraneParams::default();
        let q = Vec7::from([0.0, 0.4, -0.9, 1.2, 0.3, 0.1, -0.2]);
        let mut q2 = q;
        q2[0] += PI;
        let a = forward_kinematics(&p, &q);
        let b = forward_kinematics(&p, &q2);
        for i in 0..N_JOINTS {
            let pa = a[i].translation.vector;
            let pb = b[i].translation.vector;
            assert!((pb.x + pa.x).abs() < 1e-12);
            assert!((pb.y + pa.y).abs() < 1e-12);
            assert!((pb.z - pa.z).abs() < 1e-12);
        }
    }

    #[test]
    fn pose_depends_only_on_upstream_joints() {
        let p = CraneParams::default();
        let q = Vec7::from([0.2, 0.4, -0.9, 1.2, 0.3, 0.1, -0.2]);
        let base = forward_kinematics(&p, &q);
        for j in 0..N_JOINTS {
            let mut qj = q;
            qj[j] += 0.37;
            let moved = forward_kinematics(&p, &qj);
            for i in 0..j {
                assert_eq!(base[i], moved[i], "pose {i} moved with joint {j}");
            }
        }
    }
}
