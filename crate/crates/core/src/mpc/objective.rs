use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use super::{MpcConfig, OcpGuess, PenaltyGroups, PenaltyTotals};
use crate::collision::{link_distances, CollisionGeometry};
use crate::crane::{
    pump_flow, pump_flow_gradient, state_derivative, state_jacobians, CraneParams, CraneState, StateVec, Vec5,
    N_ACTUATED, N_JOINTS, STATE_DIM,
};
use crate::edf::VoxelEdf;
use crate::error::Result;
use crate::reference::ReferenceSpline;

type StateMat = SMatrix<f64, STATE_DIM, STATE_DIM>;
type InputMat = SMatrix<f64, STATE_DIM, N_ACTUATED>;
type Row = SVector<f64, STATE_DIM>;

const QD: usize = N_JOINTS;
const QDD_A: usize = 2 * N_JOINTS;
/// Decision variables per shooting interval: five velocity commands and `τ̇`.
pub(crate) const NZ: usize = N_ACTUATED + 1;

fn rk4(params: &CraneParams, x: &StateVec, u: &Vec5, h: f64) -> Result<StateVec> {
    let f = |x: &StateVec| state_derivative(params, &CraneState::from_vector(x), u);
    let k1 = f(x)?;
    let k2 = f(&(x + k1 * (0.5 * h)))?;
    let k3 = f(&(x + k2 * (0.5 * h)))?;
    let k4 = f(&(x + k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// One RK4 step of length `ts` with `u` held.
pub fn discretize_step(params: &CraneParams, x: &CraneState, u: &Vec5, ts: f64) -> Result<CraneState> {
    rk4(params, &x.to_vector(), u, ts).map(|v| CraneState::from_vector(&v))
}

/// Next state of one RK4 step and its exact Jacobians.
#[derive(Debug, Clone)]
pub struct StepJacobians {
    pub x_next: StateVec,
    pub a: StateMat,
    pub b: InputMat,
}

pub fn discretize_step_jacobians(params: &CraneParams, x: &CraneState, u: &Vec5, h: f64) -> Result<StepJacobians> {
    let x0 = x.to_vector();
    let id = StateMat::identity();
    let jac = |x: &StateVec| state_jacobians(params, &CraneState::from_vector(x), u);

    let j1 = jac(&x0)?;
    let (k1x, k1u) = (j1.a, j1.b);
    let j2 = jac(&(x0 + j1.f * (0.5 * h)))?;
    let k2x = j2.a * (id + k1x * (0.5 * h));
    let k2u = j2.a * (k1u * (0.5 * h)) + j2.b;
    let j3 = jac(&(x0 + j2.f * (0.5 * h)))?;
    let k3x = j3.a * (id + k2x * (0.5 * h));
    let k3u = j3.a * (k2u * (0.5 * h)) + j3.b;
    let j4 = jac(&(x0 + j3.f * h))?;
    let k4x = j4.a * (id + k3x * h);
    let k4u = j4.a * (k3u * h) + j4.b;

    let s = h / 6.0;
    Ok(StepJacobians {
        x_next: x0 + (j1.f + j2.f * 2.0 + j3.f * 2.0 + j4.f) * s,
        a: id + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * s,
        b: (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * s,
    })
}

/// Tracking, sway, velocity, acceleration and progress terms of one stage.
pub fn stage_cost(x: &CraneState, _u: &Vec5, tau: f64, tau_dot: f64, spline: &ReferenceSpline, config: &MpcConfig) -> f64 {
    let w = config.weights;
    w.track * (x.q_a() - spline.eval(tau)).norm_squared()
        + w.damp * x.qd_p().norm_squared()
        + w.vel * x.qd_a().norm_squared()
        + w.accl * x.qdd_a.norm_squared()
        + w.prog * (tau_dot - 1.0).powi(2)
}

/// Everything one solve needs besides the decision variables.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub params: &'a CraneParams,
    pub geometry: &'a CollisionGeometry,
    pub spline: &'a ReferenceSpline,
    pub edf: &'a VoxelEdf,
    pub config: &'a MpcConfig,
}

/// One least-squares residual of a stage and its partials.
#[derive(Debug, Clone)]
struct Residual {
    r: f64,
    dx: Row,
    dtau: f64,
    dtau_dot: f64,
}

impl Residual {
    fn new(r: f64) -> Self {
        Self { r, dx: Row::zeros(), dtau: 0.0, dtau_dot: 0.0 }
    }
}

struct StageModel<'a> {
    problem: Problem<'a>,
    groups: PenaltyGroups,
    sw: [f64; 5],
}

impl<'a> StageModel<'a> {
    fn new(problem: Problem<'a>) -> Self {
        let w = problem.config.weights;
        Self {
            groups: problem.config.penalty_groups(problem.params),
            sw: [w.track.sqrt(), w.damp.sqrt(), w.vel.sqrt(), w.accl.sqrt(), w.prog.sqrt()],
            problem,
        }
    }

    /// Pushes the stage residuals (active penalty rows only) and returns the
    /// stage's penalty totals. The objective is the sum of squared residuals.
    fn residuals(&self, x: &CraneState, tau: f64, tau_dot: f64, out: &mut Vec<Residual>) -> PenaltyTotals {
        let p = self.problem.params;
        let cfg = self.problem.config;
        let [s_track, s_damp, s_vel, s_accl, s_prog] = self.sw;
        let mut totals = PenaltyTotals::default();

        if s_track > 0.0 {
            let qd = self.problem.spline.eval(tau);
            let slope = self.problem.spline.derivative(tau);
            for j in 0..N_ACTUATED {
                let mut r = Residual::new(s_track * (x.q[j] - qd[j]));
                r.dx[j] = s_track;
                r.dtau = -s_track * slope[j];
                out.push(r);
            }
        }
        let quadratic = |scale: f64, index: usize, value: f64, out: &mut Vec<Residual>| {
            if scale > 0.0 {
                let mut r = Residual::new(scale * value);
                r.dx[index] = scale;
                out.push(r);
            }
        };
        for i in 0..2 {
            quadratic(s_damp, QD + N_ACTUATED + i, x.qd[N_ACTUATED + i], out);
        }
        for j in 0..N_ACTUATED {
            quadratic(s_vel, QD + j, x.qd[j], out);
            quadratic(s_accl, QDD_A + j, x.qdd_a[j], out);
        }
        if s_prog > 0.0 {
            let mut r = Residual::new(s_prog * (tau_dot - 1.0));
            r.dtau_dot = s_prog;
            out.push(r);
        }

        // one-sided penalty rows: sqrt(μ/2)·(h − ε) while h < ε
        let mut barrier = |h: f64, m: super::Margin, fill: &dyn Fn(&mut Residual, f64), total: &mut f64| {
            if h < m.epsilon {
                let s = (0.5 * m.mu).sqrt();
                let mut r = Residual::new(s * (h - m.epsilon));
                fill(&mut r, s);
                *total += r.r * r.r;
                out.push(r);
            }
        };
        for j in 0..N_JOINTS {
            let m = self.groups.joint[j];
            barrier(x.q[j] - p.q_min[j], m, &|r, s| r.dx[j] = s, &mut totals.joint);
            barrier(p.q_max[j] - x.q[j], m, &|r, s| r.dx[j] = -s, &mut totals.joint);
        }
        for j in 0..N_ACTUATED {
            let m = self.groups.accel[j];
            barrier(x.qdd_a[j] - p.qdd_a_min[j], m, &|r, s| r.dx[QDD_A + j] = s, &mut totals.accel);
            barrier(p.qdd_a_max[j] - x.qdd_a[j], m, &|r, s| r.dx[QDD_A + j] = -s, &mut totals.accel);
        }
        if cfg.flow_penalty {
            let qd_a = x.qd_a();
            let h = 1.0 - pump_flow(p, &x.q_a(), &qd_a) / p.q_flow_max;
            let fill = |r: &mut Residual, s: f64| {
                let g = pump_flow_gradient(p, &qd_a);
                for j in 0..N_ACTUATED {
                    r.dx[QD + j] = -s * g[j] / p.q_flow_max;
                }
            };
            barrier(h, self.groups.flow, &fill, &mut totals.flow);
        }
        if cfg.collision_penalty {
            let m = self.groups.collision;
            for link in link_distances(self.problem.edf, p, self.problem.geometry, &x.q) {
                let fill = |r: &mut Residual, s: f64| {
                    for j in 0..N_JOINTS {
                        r.dx[j] = s * link.gradient[j];
                    }
                };
                barrier(link.sd, m, &fill, &mut totals.collision);
            }
        }
        // τ̇ ≥ 0 is left to the box projection alone: a margin there would
        // hold τ̇ near ε and keep the reference creeping into a blockage
        barrier(cfg.tau_dot_max - tau_dot, self.groups.progress, &|r, s| r.dtau_dot = -s, &mut totals.progress);
        totals
    }
}

fn add_totals(acc: &mut PenaltyTotals, t: &PenaltyTotals) {
    acc.joint += t.joint;
    acc.accel += t.accel;
    acc.flow += t.flow;
    acc.collision += t.collision;
    acc.progress += t.progress;
}

/// Value of the penalized objective and, on request, its gradient and
/// Gauss-Newton Hessian with respect to the interleaved decision vector
/// `[u_0, τ̇_0, u_1, τ̇_1, …]`.
#[derive(Debug, Clone)]
pub struct Objective {
    pub value: f64,
    pub penalties: PenaltyTotals,
    pub states: Vec<CraneState>,
    pub tau: Vec<f64>,
    pub gradient: Option<DVector<f64>>,
    pub(crate) hessian: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Order {
    Value,
    Gradient,
    GaussNewton,
}

pub(crate) fn evaluate(problem: Problem<'_>, x_init: &CraneState, tau_init: f64, guess: &OcpGuess, order: Order) -> Result<Objective> {
    let n = guess.u.len();
    let ts = problem.config.ts;
    let model = StageModel::new(problem);
    let nz = NZ * n;

    let mut states = Vec::with_capacity(n);
    let mut tau = Vec::with_capacity(n);
    let mut penalties = PenaltyTotals::default();
    let mut value = 0.0;
    let mut rows = Vec::with_capacity(64);

    let derivs = order != Order::Value;
    let mut grad = DVector::zeros(if derivs { nz } else { 0 });
    let mut hess = DMatrix::zeros(if order == Order::GaussNewton { nz } else { 0 }, if order == Order::GaussNewton { nz } else { 0 });
    // ∂x_k/∂z; only the first NZ·k columns are ever nonzero
    let mut sens = DMatrix::<f64>::zeros(if derivs { STATE_DIM } else { 0 }, nz);
    let mut scratch = DMatrix::<f64>::zeros(0, 0);

    let mut x = *x_init;
    let mut t = tau_init;
    for k in 0..n {
        tau.push(t);
        let u = &guess.u[k];
        let td = guess.tau_dot[k];
        if derivs {
            let step = discretize_step_jacobians(problem.params, &x, u, ts)?;
            let cols = NZ * k;
            if cols > 0 {
                let prev = sens.columns(0, cols).into_owned();
                sens.columns_mut(0, cols).copy_from(&(step.a * prev));
            }
            sens.fixed_view_mut::<STATE_DIM, N_ACTUATED>(0, cols).copy_from(&step.b);
            x = CraneState::from_vector(&step.x_next);
        } else {
            x = CraneState::from_vector(&rk4(problem.params, &x.to_vector(), u, ts)?);
        }
        // progress after this interval, accumulated exactly as stored in `tau`
        t += td * ts;

        rows.clear();
        let stage = model.residuals(&x, t, td, &mut rows);
        add_totals(&mut penalties, &stage);
        value += rows.iter().map(|r| r.r * r.r).sum::<f64>();
        states.push(x);

        if derivs && !rows.is_empty() {
            let cols = NZ * (k + 1);
            let m = rows.len();
            let rx = DMatrix::from_fn(m, STATE_DIM, |i, j| rows[i].dx[j]);
            let mut jk = rx * sens.columns(0, cols);
            for (i, r) in rows.iter().enumerate() {
                if r.dtau != 0.0 {
                    for j in 0..=k {
                        jk[(i, NZ * j + N_ACTUATED)] += r.dtau * ts;
                    }
                }
                jk[(i, NZ * k + N_ACTUATED)] += r.dtau_dot;
            }
            let rv = DVector::from_fn(m, |i, _| rows[i].r);
            grad.rows_mut(0, cols).gemv_tr(2.0, &jk, &rv, 1.0);
            if order == Order::GaussNewton {
                let jt = jk.transpose();
                scratch.resize_mut(cols, cols, 0.0);
                scratch.gemm(2.0, &jt, &jk, 0.0);
                let mut block = hess.view_mut((0, 0), (cols, cols));
                block += &scratch;
            }
        }
    }

    Ok(Objective {
        value,
        penalties,
        states,
        tau,
        gradient: derivs.then_some(grad),
        hessian: (order == Order::GaussNewton).then_some(hess),
    })
}

/// Penalized objective of the decision sequence and its gradient, laid out as
/// `[u_0, τ̇_0, u_1, τ̇_1, …]`.
pub fn total_objective(problem: Problem<'_>, x_init: &CraneState, tau_init: f64, guess: &OcpGuess) -> Result<Objective> {
    evaluate(problem, x_init, tau_init, guess, Order::Gradient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crane::{passive_equilibrium, Vec7};
    use crate::reference::plan_reference;

    fn hanging(q_a: Vec5) -> CraneState {
        let p = CraneParams::default();
        let qp = passive_equilibrium(&p, &q_a);
        CraneState::at_rest(Vec7::from_fn(|i, _| if i < 5 { q_a[i] } else { qp[i - 5] }))
    }

    #[test]
    fn stage_cost_terms() {
        let cfg = MpcConfig::default();
        let q_a = Vec5::new(0.2, 0.3, -0.8, 0.5, 0.0);
        let spline = plan_reference(&[q_a], &Vec5::repeat(0.3), &Vec5::repeat(0.5)).unwrap();
        let x = hanging(q_a);
        let u = Vec5::zeros();
        assert!(stage_cost(&x, &u, 0.0, 1.0, &spline, &cfg).abs() < 1e-20);
        assert!((stage_cost(&x, &u, 0.0, 0.0, &spline, &cfg) - 0.2).abs() < 1e-15);
        let mut y = x;
        y.qd[5] = 0.1;
        assert!((stage_cost(&y, &u, 0.0, 1.0, &spline, &cfg) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_is_a_fixed_point_of_the_step() {
        let p = CraneParams::default();
        let x = hanging(Vec5::new(0.2, 0.3, -0.8, 0.5, 0.0));
        let y = discretize_step(&p, &x, &Vec5::zeros(), 0.1).unwrap();
        assert!((y.to_vector() - x.to_vector()).norm() < 1e-12);
    }

    #[test]
    fn step_jacobians_match_differences() {
        let p = CraneParams::default();
        let mut x = hanging(Vec5::new(0.2, 0.3, -0.8, 0.5, 0.0));
        x.qd = Vec7::from([0.1, -0.05, 0.08, 0.02, 0.3, 0.2, -0.1]);
        x.q[5] += 0.1;
        x.qdd_a = Vec5::new(0.1, -0.2, 0.05, 0.0, 0.3);
        let u = Vec5::new(0.2, -0.1, 0.1, 0.05, -0.3);
        let j = discretize_step_jacobians(&p, &x, &u, 0.1).unwrap();
        let base = x.to_vector();
        let h = 1e-6;
        for c in 0..STATE_DIM {
            let mut e = StateVec::zeros();
            e[c] = h;
            let fp = rk4(&p, &(base + e), &u, 0.1).unwrap();
            let fm = rk4(&p, &(base - e), &u, 0.1).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - j.a.column(c)).norm() < 1e-6 * (1.0 + fd.norm()), "state column {c}");
        }
        for c in 0..N_ACTUATED {
            let mut e = Vec5::zeros();
            e[c] = h;
            let fd = (rk4(&p, &base, &(u + e), 0.1).unwrap() - rk4(&p, &base, &(u - e), 0.1).unwrap()) / (2.0 * h);
            assert!((fd - j.b.column(c)).norm() < 1e-6 * (1.0 + fd.norm()), "input column {c}");
        }
    }
}
