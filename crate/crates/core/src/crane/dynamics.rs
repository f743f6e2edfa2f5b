//! Rigid-body dynamics of the crane chain.
//!
//! The mass matrix comes from the composite-rigid-body recursion in world
//! coordinates; Coriolis, centrifugal and gravity terms come from recursive
//! Newton-Euler. Newton-Euler is generic over [`Real`] so the solver can get
//! exact state Jacobians by running it on dual numbers.

use nalgebra::{Matrix2, Matrix3, SMatrix, Vector3};

use super::kinematics::{joint_frames, joint_transform, lift3, lift33, skew};
use super::{
    CraneParams, CraneState, JointKind, Mat7, StateVec, Vec2, Vec5, Vec7, N_ACTUATED, N_JOINTS,
    N_PASSIVE, STATE_DIM,
};
use crate::dual::{Dual, Real};
use crate::error::{Error, Result};

const MAX_PASSIVE_COND: f64 = 1e8;

/// Recursive Newton-Euler. Returns joint forces for joints `first..7`; the
/// entries before `first` are left at zero.
pub(crate) fn rnea<T: Real>(
    params: &CraneParams,
    q: &[T; N_JOINTS],
    qd: &[T; N_JOINTS],
    qdd: &[T; N_JOINTS],
    with_gravity: bool,
    first: usize,
) -> [T; N_JOINTS] {
    let zero3 = Vector3::<T>::zeros();
    let mut rots = [Matrix3::<T>::identity(); N_JOINTS];
    let mut offs = [zero3; N_JOINTS];
    let mut forces = [zero3; N_JOINTS];
    let mut moments = [zero3; N_JOINTS];

    let mut w = zero3;
    let mut wd = zero3;
    let mut a = if with_gravity { -lift3::<T>(&params.gravity) } else { zero3 };

    for i in 0..N_JOINTS {
        let joint = &params.joints[i];
        let (r, p) = joint_transform(joint, q[i]);
        let rt = r.transpose();
        let s = lift3::<T>(&joint.axis);
        let a_origin = rt * (a + wd.cross(&p) + w.cross(&w.cross(&p)));
        let w_in = rt * w;
        let wd_in = rt * wd;
        match joint.kind {
            JointKind::Revolute => {
                let sv = s * qd[i];
                w = w_in + sv;
                wd = wd_in + w_in.cross(&sv) + s * qdd[i];
                a = a_origin;
            }
            JointKind::Prismatic => {
                w = w_in;
                wd = wd_in;
                a = a_origin + w.cross(&(s * qd[i])) * T::cst(2.0) + s * qdd[i];
            }
        }
        let link = &params.links[i];
        let c = lift3::<T>(&link.com);
        let inertia = lift33::<T>(&link.inertia);
        let a_com = a + wd.cross(&c) + w.cross(&w.cross(&c));
        let f = a_com * T::cst(link.mass);
        forces[i] = f;
        moments[i] = inertia * wd + w.cross(&(inertia * w)) + c.cross(&f);
        rots[i] = r;
        offs[i] = p;
    }

    let mut tau = [T::zero(); N_JOINTS];
    let mut f_child = zero3;
    let mut n_child = zero3;
    for i in (first..N_JOINTS).rev() {
        let (f, n) = if i + 1 < N_JOINTS {
            let fc = rots[i + 1] * f_child;
            (forces[i] + fc, moments[i] + rots[i + 1] * n_child + offs[i + 1].cross(&fc))
        } else {
            (forces[i], moments[i])
        };
        let s = lift3::<T>(&params.joints[i].axis);
        tau[i] = match params.joints[i].kind {
            JointKind::Revolute => s.dot(&n),
            JointKind::Prismatic => s.dot(&f),
        };
        f_child = f;
        n_child = n;
    }
    tau
}

fn arr(v: &Vec7) -> [f64; N_JOINTS] {
    std::array::from_fn(|i| v[i])
}

/// Joint forces `D(q)q̈ + C(q,q̇)q̇ + g(q)` (gravity term optional).
pub fn inverse_dynamics(params: &CraneParams, q: &Vec7, qd: &Vec7, qdd: &Vec7, with_gravity: bool) -> Vec7 {
    Vec7::from(rnea(params, &arr(q), &arr(qd), &arr(qdd), with_gravity, 0))
}

/// Generalized gravity forces `g(q)`.
pub fn gravity_forces(params: &CraneParams, q: &Vec7) -> Vec7 {
    let z = [0.0; N_JOINTS];
    Vec7::from(rnea(params, &arr(q), &z, &z, true, 0))
}

/// Passive rows `C_P(q,q̇)q̇ + g_P(q)`.
pub fn bias_forces(params: &CraneParams, q: &Vec7, qd: &Vec7) -> Vec2 {
    let tau = rnea(params, &arr(q), &arr(qd), &[0.0; N_JOINTS], true, N_ACTUATED);
    Vec2::new(tau[5], tau[6])
}

/// Joint-space inertia matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassMatrix {
    pub full: Mat7,
}

impl MassMatrix {
    /// Passive-by-actuated coupling block `D_M` (rows 6–7, columns 1–5).
    pub fn d_m(&self) -> SMatrix<f64, N_PASSIVE, N_ACTUATED> {
        self.full.fixed_view::<N_PASSIVE, N_ACTUATED>(N_ACTUATED, 0).into_owned()
    }

    /// Passive block `D_P` (rows 6–7, columns 6–7).
    pub fn d_p(&self) -> Matrix2<f64> {
        self.full.fixed_view::<N_PASSIVE, N_PASSIVE>(N_ACTUATED, N_ACTUATED).into_owned()
    }
}

/// Spatial momentum (angular about the world origin, linear) produced by a
/// composite body moving with the given twist.
struct Composite {
    mass: f64,
    first_moment: Vector3<f64>,
    inertia: Matrix3<f64>,
}

impl Composite {
    fn momentum(&self, w: &Vector3<f64>, v: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let h = self.first_moment;
        (self.inertia * w + h.cross(v), v * self.mass - h.cross(w))
    }
}

/// Composite inertias of every subtree plus the world-frame motion subspaces.
fn composites(params: &CraneParams, q: &Vec7) -> ([Composite; N_JOINTS], [(Vector3<f64>, Vector3<f64>); N_JOINTS]) {
    let frames = joint_frames(params, q);
    let mut acc = Composite { mass: 0.0, first_moment: Vector3::zeros(), inertia: Matrix3::zeros() };
    let mut comp: [Composite; N_JOINTS] = std::array::from_fn(|_| Composite {
        mass: 0.0,
        first_moment: Vector3::zeros(),
        inertia: Matrix3::zeros(),
    });
    for i in (0..N_JOINTS).rev() {
        let link = &params.links[i];
        let f = &frames[i];
        let c = f.to_world(&link.com);
        let sc = skew(&c);
        acc.mass += link.mass;
        acc.first_moment += c * link.mass;
        acc.inertia += f.rotation * link.inertia * f.rotation.transpose() - sc * sc * link.mass;
        comp[i] = Composite { mass: acc.mass, first_moment: acc.first_moment, inertia: acc.inertia };
    }
    let motion = frames.map(|f| match f.kind {
        JointKind::Revolute => (f.axis, f.origin.cross(&f.axis)),
        JointKind::Prismatic => (Vector3::zeros(), f.axis),
    });
    (comp, motion)
}

/// Full 7×7 mass matrix by the composite-rigid-body recursion.
pub fn mass_matrix(params: &CraneParams, q: &Vec7) -> MassMatrix {
    let (comp, motion) = composites(params, q);
    let mut d = Mat7::zeros();
    for i in 0..N_JOINTS {
        let (l, p) = comp[i].momentum(&motion[i].0, &motion[i].1);
        for j in 0..=i {
            let v = motion[j].0.dot(&l) + motion[j].1.dot(&p);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    MassMatrix { full: d }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassiveBlocks {
    pub d_m: SMatrix<f64, N_PASSIVE, N_ACTUATED>,
    pub d_p: Matrix2<f64>,
}

/// Only the two passive rows of the mass matrix.
pub fn passive_blocks(params: &CraneParams, q: &Vec7) -> PassiveBlocks {
    let (comp, motion) = composites(params, q);
    let mut rows = SMatrix::<f64, N_PASSIVE, N_JOINTS>::zeros();
    for (r, i) in (N_ACTUATED..N_JOINTS).enumerate() {
        let (l, p) = comp[i].momentum(&motion[i].0, &motion[i].1);
        for j in 0..=i {
            rows[(r, j)] = motion[j].0.dot(&l) + motion[j].1.dot(&p);
        }
    }
    rows[(0, 6)] = rows[(1, 5)];
    PassiveBlocks {
        d_m: rows.fixed_view::<2, 5>(0, 0).into_owned(),
        d_p: rows.fixed_view::<2, 2>(0, 5).into_owned(),
    }
}

fn spd2_condition(m: &Matrix2<f64>) -> f64 {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    let hi = 0.5 * tr + disc;
    let lo = 0.5 * tr - disc;
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn invert_passive(d_p: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let cond = spd2_condition(d_p);
    if !(cond <= MAX_PASSIVE_COND) {
        return Err(Error::SingularPassiveInertia { cond });
    }
    d_p.try_inverse().ok_or(Error::SingularPassiveInertia { cond })
}

fn full_accel(qdd_a: &Vec5, qdd_p: &Vec2) -> [f64; N_JOINTS] {
    let mut out = [0.0; N_JOINTS];
    out[..N_ACTUATED].copy_from_slice(qdd_a.as_slice());
    out[N_ACTUATED..].copy_from_slice(qdd_p.as_slice());
    out
}

fn passive_solve(
    params: &CraneParams,
    q: &Vec7,
    qd: &Vec7,
    qdd_a: &Vec5,
) -> Result<(Vec2, PassiveBlocks, Matrix2<f64>)> {
    let blocks = passive_blocks(params, q);
    let inv = invert_passive(&blocks.d_p)?;
    // passive rows with q̈_P = 0: D_M q̈_A + C_P q̇ + g_P
    let tau = rnea(params, &arr(q), &arr(qd), &full_accel(qdd_a, &Vec2::zeros()), true, N_ACTUATED);
    let damping = Vec2::new(qd[5], qd[6]) * params.passive_damping;
    let qdd_p = -inv * (Vec2::new(tau[5], tau[6]) + damping);
    Ok((qdd_p, blocks, inv))
}

/// Pendulum acceleration `q̈_P = −D_P⁻¹(D_M q̈_A + C_P q̇ + g_P)`, plus the
/// optional viscous passive damping term.
pub fn pendulum_accel(params: &CraneParams, q: &Vec7, qd: &Vec7, qdd_a: &Vec5) -> Result<Vec2> {
    passive_solve(params, q, qd, qdd_a).map(|(a, _, _)| a)
}

/// Second-order velocity model of the hydraulic actuators.
pub fn actuator_jerk(params: &CraneParams, qd_a: &Vec5, qdd_a: &Vec5, u: &Vec5) -> Vec5 {
    let w = &params.actuator_omega;
    let d = &params.actuator_damping;
    Vec5::from_fn(|l, _| w[l] * w[l] * (u[l] - qd_a[l]) - 2.0 * d[l] * w[l] * qdd_a[l])
}

/// Continuous-time right-hand side `ẋ = [q̇, q̈_A, q̈_P, q⃛_A]`.
pub fn state_derivative(params: &CraneParams, x: &CraneState, u: &Vec5) -> Result<StateVec> {
    let qdd_p = pendulum_accel(params, &x.q, &x.qd, &x.qdd_a)?;
    let jerk = actuator_jerk(params, &x.qd_a(), &x.qdd_a, u);
    Ok(assemble_derivative(x, &qdd_p, &jerk))
}

fn assemble_derivative(x: &CraneState, qdd_p: &Vec2, jerk: &Vec5) -> StateVec {
    let mut dx = StateVec::zeros();
    dx.fixed_rows_mut::<7>(0).copy_from(&x.qd);
    dx.fixed_rows_mut::<5>(7).copy_from(&x.qdd_a);
    dx.fixed_rows_mut::<2>(12).copy_from(qdd_p);
    dx.fixed_rows_mut::<5>(14).copy_from(jerk);
    dx
}

/// Right-hand side together with its exact Jacobians.
#[derive(Debug, Clone)]
pub struct StateJacobians {
    pub f: StateVec,
    /// `∂ẋ/∂x`
    pub a: SMatrix<f64, STATE_DIM, STATE_DIM>,
    /// `∂ẋ/∂u`
    pub b: SMatrix<f64, STATE_DIM, N_ACTUATED>,
}

const NDIR: usize = 2 * N_JOINTS;

pub fn state_jacobians(params: &CraneParams, x: &CraneState, u: &Vec5) -> Result<StateJacobians> {
    let (qdd_p, blocks, inv) = passive_solve(params, &x.q, &x.qd, &x.qdd_a)?;
    let jerk = actuator_jerk(params, &x.qd_a(), &x.qdd_a, u);
    let f = assemble_derivative(x, &qdd_p, &jerk);

    let qs: [Dual<NDIR>; N_JOINTS] = std::array::from_fn(|i| Dual::variable(x.q[i], i));
    let qds: [Dual<NDIR>; N_JOINTS] = std::array::from_fn(|i| Dual::variable(x.qd[i], N_JOINTS + i));
    let acc = full_accel(&x.qdd_a, &qdd_p).map(Dual::<NDIR>::constant);
    let tau = rnea(params, &qs, &qds, &acc, true, N_ACTUATED);

    let mut dtau = SMatrix::<f64, N_PASSIVE, NDIR>::zeros();
    for r in 0..N_PASSIVE {
        for c in 0..NDIR {
            dtau[(r, c)] = tau[N_ACTUATED + r].d[c];
        }
    }
    dtau[(0, N_JOINTS + 5)] += params.passive_damping;
    dtau[(1, N_JOINTS + 6)] += params.passive_damping;
    let dqdd_p = -inv * dtau;
    let dqdd_p_dqdd_a = -inv * blocks.d_m;

    let mut a = SMatrix::<f64, STATE_DIM, STATE_DIM>::zeros();
    for i in 0..N_JOINTS {
        a[(i, N_JOINTS + i)] = 1.0;
    }
    for l in 0..N_ACTUATED {
        a[(7 + l, 14 + l)] = 1.0;
    }
    a.fixed_view_mut::<2, 14>(12, 0).copy_from(&dqdd_p);
    a.fixed_view_mut::<2, 5>(12, 14).copy_from(&dqdd_p_dqdd_a);
    let mut b = SMatrix::<f64, STATE_DIM, N_ACTUATED>::zeros();
    for l in 0..N_ACTUATED {
        let w = params.actuator_omega[l];
        let d = params.actuator_damping[l];
        a[(14 + l, 7 + l)] = -w * w;
        a[(14 + l, 14 + l)] = -2.0 * d * w;
        b[(14 + l, l)] = w * w;
    }
    Ok(StateJacobians { f, a, b })
}

fn passive_gravity_with_stiffness(params: &CraneParams, q: &Vec7) -> (Vec2, Matrix2<f64>) {
    let qs: [Dual<2>; N_JOINTS] = std::array::from_fn(|i| {
        if i >= N_ACTUATED {
            Dual::variable(q[i], i - N_ACTUATED)
        } else {
            Dual::constant(q[i])
        }
    });
    let z = [Dual::<2>::constant(0.0); N_JOINTS];
    let tau = rnea(params, &qs, &z, &z, true, N_ACTUATED);
    let g = Vec2::new(tau[5].v, tau[6].v);
    let k = Matrix2::new(tau[5].d[0], tau[5].d[1], tau[6].d[0], tau[6].d[1]);
    (g, k)
}

/// Passive angles at which the gripper hangs at rest for the given actuated
/// configuration (zero passive gravity torque), found by Newton iteration.
pub fn passive_equilibrium(params: &CraneParams, q_a: &Vec5) -> Vec2 {
    let mut q = super::join_q(q_a, &Vec2::zeros());
    for _ in 0..50 {
        let (g, k) = passive_gravity_with_stiffness(params, &q);
        if g.norm() < 1e-12 {
            break;
        }
        let Some(kinv) = k.try_inverse() else { break };
        let step = kinv * g;
        q[5] -= step[0];
        q[6] -= step[1];
        if step.norm() < 1e-15 {
            break;
        }
    }
    Vec2::new(q[5], q[6])
}

/// Slowest small-oscillation period of the pendulum about its hanging
/// equilibrium with the actuated joints held at `q_a`.
pub fn pendulum_period(params: &CraneParams, q_a: &Vec5) -> f64 {
    let q = super::join_q(q_a, &passive_equilibrium(params, q_a));
    let (_, k) = passive_gravity_with_stiffness(params, &q);
    let d_p = passive_blocks(params, &q).d_p;
    // det(K − λ D_P) = 0
    let a = d_p.determinant();
    let b = -(k[(0, 0)] * d_p[(1, 1)] + k[(1, 1)] * d_p[(0, 0)] - k[(0, 1)] * d_p[(1, 0)] - k[(1, 0)] * d_p[(0, 1)]);
    let c = k.determinant();
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    let lam_min = (-b - disc) / (2.0 * a);
    2.0 * std::f64::consts::PI / lam_min.sqrt()
}
