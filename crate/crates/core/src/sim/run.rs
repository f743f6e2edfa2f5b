use std::collections::HashSet;

use crate::collision::{decompose_links, link_signed_distance};
use crate::crane::{join_q, passive_equilibrium, pump_flow, state_derivative, CraneParams, CraneState, StateVec, Vec2, Vec5, Vec7};
use crate::edf::{VoxelEdf, VoxelGrid};
use crate::error::{Error, Result};
use crate::mpc::{shift_warm_start, solve_mpc, OcpGuess, OcpSolution, PenaltyTotals, Problem};
use crate::reference::plan_reference;

use super::{Controller, ScenarioSpec};

/// One RK4 step of the plant model.
pub fn step_plant(params: &CraneParams, state: &CraneState, u: &Vec5, dt: f64) -> Result<CraneState> {
    if !(dt > 0.0 && dt <= 1e-2) {
        return Err(Error::InvalidState(format!("plant dt must lie in (0, 0.01] s, got {dt}")));
    }
    let f = |x: &StateVec| state_derivative(params, &CraneState::from_vector(x), u);
    let x = state.to_vector();
    let k1 = f(&x)?;
    let k2 = f(&(x + k1 * (0.5 * dt)))?;
    let k3 = f(&(x + k2 * (0.5 * dt)))?;
    let k4 = f(&(x + k3 * dt))?;
    let next = CraneState::from_vector(&(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)));
    next.check_finite()?;
    Ok(next)
}

/// Adds `impulse` to the passive joint rates.
pub fn apply_disturbance(state: &CraneState, impulse: &Vec2) -> CraneState {
    let mut s = *state;
    s.qd[5] += impulse[0];
    s.qd[6] += impulse[1];
    s
}

/// Closed-loop record at one control instant. The state is the one the
/// controller saw; the audit columns cover the following control period.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub q: Vec7,
    pub qd: Vec7,
    pub u: Vec5,
    pub tau: f64,
    pub tau_dot: f64,
    pub flow: f64,
    pub sd: [f64; 3],
    /// Minimum over links and plant substeps of the signed distance.
    pub substep_min_sd: f64,
    pub substep_max_flow: f64,
    pub objective: f64,
    pub penalties: PenaltyTotals,
    pub iterations: usize,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub t: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    pub final_state: CraneState,
    pub final_tau: f64,
    pub failure: Option<RunFailure>,
}

fn min_sd(edf: &VoxelEdf, spec: &ScenarioSpec, q: &Vec7) -> [f64; 3] {
    let set = decompose_links(&spec.params, &spec.geometry, q, edf.grid().resolution());
    set.links.each_ref().map(|s| link_signed_distance(edf, s).0)
}

struct World {
    edf: VoxelEdf,
    present: HashSet<usize>,
}

impl World {
    fn new(spec: &ScenarioSpec) -> Result<Self> {
        let env = &spec.environment;
        let grid = VoxelGrid::new(env.origin, env.resolution, env.dims)?;
        let mut world = Self { edf: VoxelEdf::new(grid, env.d_max)?, present: HashSet::new() };
        world.sync(spec, 0.0);
        Ok(world)
    }

    /// Brings the map in line with the obstacle schedule at time `t`.
    fn sync(&mut self, spec: &ScenarioSpec, t: f64) {
        let eps = 1e-9;
        let wanted: HashSet<usize> = spec
            .environment
            .obstacles
            .iter()
            .enumerate()
            .filter(|(_, o)| o.insert_at <= t + eps && o.remove_at.is_none_or(|r| t + eps < r))
            .map(|(i, _)| i)
            .collect();
        if wanted == self.present {
            return;
        }
        let mut changed = Vec::new();
        for &i in self.present.difference(&wanted) {
            let o = &spec.environment.obstacles[i];
            changed.extend(self.edf.grid_mut().set_box_obstacle(&o.min, &o.max, false));
        }
        // re-assert everything still wanted, since removals may share voxels
        for &i in &wanted {
            let o = &spec.environment.obstacles[i];
            changed.extend(self.edf.grid_mut().set_box_obstacle(&o.min, &o.max, true));
        }
        self.edf.update_incremental(&changed);
        self.present = wanted;
    }
}

/// Signed distance of the reference itself, sampled every shooting interval
/// with the passive joints at their hanging equilibrium and every scheduled
/// obstacle present. Returns `(τ, min over links of sd)` pairs.
pub fn reference_clearance(spec: &ScenarioSpec) -> Result<Vec<(f64, f64)>> {
    let spline = plan_reference(&spec.waypoints, &spec.v_limit, &spec.a_limit)?;
    let env = &spec.environment;
    let mut grid = VoxelGrid::new(env.origin, env.resolution, env.dims)?;
    for o in &env.obstacles {
        grid.set_box_obstacle(&o.min, &o.max, true);
    }
    let edf = VoxelEdf::new(grid, env.d_max)?;
    let n = ((spline.end() - spline.start()) / spec.mpc.ts).ceil() as usize;
    Ok((0..=n)
        .map(|k| {
            let tau = (spline.start() + k as f64 * spec.mpc.ts).min(spline.end());
            let q_a = spline.eval(tau);
            let q = join_q(&q_a, &passive_equilibrium(&spec.params, &q_a));
            (tau, min_sd(&edf, spec, &q).into_iter().fold(f64::INFINITY, f64::min))
        })
        .collect())
}

/// Runs the scenario: at every control instant the map is updated, the MPC
/// is solved on a snapshot and its first command is held while the plant is
/// integrated at the fine step.
pub fn run_closed_loop(spec: &ScenarioSpec) -> Result<RunLog> {
    spec.validate()?;
    let spline = plan_reference(&spec.waypoints, &spec.v_limit, &spec.a_limit)?;
    let mut world = World::new(spec)?;
    let n_sub = spec.substeps();
    let n_ctrl = spec.control_steps();
    let dt = spec.control_period / n_sub as f64;

    let mut disturbances = spec.disturbances.clone();
    disturbances.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut next_disturbance = 0;

    let mut x = spec.initial;
    let mut tau = 0.0;
    let mut warm: Option<OcpGuess> = None;
    let mut rows = Vec::with_capacity(n_ctrl);
    let mut failure = None;

    'control: for k in 0..n_ctrl {
        let t = k as f64 * spec.control_period;
        world.sync(spec, t);
        // disturbances falling exactly on this instant act before the solve
        while next_disturbance < disturbances.len() && disturbances[next_disturbance].time <= t + 1e-9 {
            x = apply_disturbance(&x, &disturbances[next_disturbance].impulse);
            next_disturbance += 1;
        }

        let (u, tau_dot, sol) = match spec.controller {
            Controller::Hold => (Vec5::zeros(), 1.0, None),
            Controller::Mpc => {
                let problem = Problem {
                    params: &spec.params,
                    geometry: &spec.geometry,
                    spline: &spline,
                    edf: &world.edf,
                    config: &spec.mpc,
                };
                match solve_mpc(problem, &x, tau, warm.as_ref()) {
                    Ok(sol) => (sol.u[0], sol.tau_dot[0], Some(sol)),
                    Err(e) => {
                        failure = Some(RunFailure { t, message: e.to_string() });
                        break 'control;
                    }
                }
            }
        };

        let sd = min_sd(&world.edf, spec, &x.q);
        let flow = pump_flow(&spec.params, &x.q_a(), &x.qd_a());
        let mut row = LogRow {
            t,
            q: x.q,
            qd: x.qd,
            u,
            tau,
            tau_dot,
            flow,
            sd,
            substep_min_sd: sd.iter().copied().fold(f64::INFINITY, f64::min),
            substep_max_flow: flow,
            objective: sol.as_ref().map_or(0.0, |s: &OcpSolution| s.objective),
            penalties: sol.as_ref().map_or_else(PenaltyTotals::default, |s| s.penalties),
            iterations: sol.as_ref().map_or(0, |s| s.iterations),
            solve_ms: sol.as_ref().map_or(0.0, |s| s.wall_time_ms),
        };

        for i in 0..n_sub {
            let ts = t + i as f64 * dt;
            while next_disturbance < disturbances.len() && disturbances[next_disturbance].time <= ts + 1e-9 {
                x = apply_disturbance(&x, &disturbances[next_disturbance].impulse);
                next_disturbance += 1;
            }
            x = match step_plant(&spec.params, &x, &u, dt) {
                Ok(next) => next,
                Err(e) => {
                    failure = Some(RunFailure { t: ts, message: format!("plant integration failed: {e}") });
                    rows.push(row);
                    break 'control;
                }
            };
            let s = min_sd(&world.edf, spec, &x.q);
            row.substep_min_sd = s.iter().copied().fold(row.substep_min_sd, f64::min);
            row.substep_max_flow = row.substep_max_flow.max(pump_flow(&spec.params, &x.q_a(), &x.qd_a()));
        }
        rows.push(row);
        tau += tau_dot * spec.control_period;
        warm = sol.map(|s| shift_warm_start(&s, &spec.mpc));
    }

    Ok(RunLog { rows, final_state: x, final_tau: tau, failure })
}
