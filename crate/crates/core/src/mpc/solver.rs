use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DVector};

use super::objective::{evaluate, Objective, Order, Problem, NZ};
use super::{MpcConfig, OcpGuess, OcpSolution};
use crate::crane::{CraneState, Vec5, N_ACTUATED};
use crate::error::{Error, Result};

/// Drops the first interval and repeats the last one.
pub fn shift_warm_start(prev: &OcpSolution, config: &MpcConfig) -> OcpGuess {
    let n = config.horizon;
    let shift = |v: &[Vec5]| -> Vec<Vec5> {
        let mut out: Vec<Vec5> = v.iter().skip(1).copied().collect();
        out.push(*v.last().unwrap());
        out.resize(n, *v.last().unwrap());
        out.truncate(n);
        out
    };
    let mut tau_dot: Vec<f64> = prev.tau_dot.iter().skip(1).copied().collect();
    tau_dot.push(*prev.tau_dot.last().unwrap());
    tau_dot.resize(n, *prev.tau_dot.last().unwrap());
    tau_dot.truncate(n);
    OcpGuess { u: shift(&prev.u), tau_dot }
}

/// Cold-start guess: follow the reference velocity at nominal progress.
fn default_guess(problem: &Problem<'_>, tau_init: f64) -> OcpGuess {
    let n = problem.config.horizon;
    let ts = problem.config.ts;
    let u = (0..n).map(|k| problem.spline.derivative(tau_init + (k as f64 + 0.5) * ts)).collect();
    OcpGuess { u, tau_dot: vec![1.0; n] }
}

struct Bounds {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl Bounds {
    fn new(problem: &Problem<'_>) -> Self {
        let n = problem.config.horizon;
        let u_max = problem.params.u_max;
        let lo = DVector::from_fn(NZ * n, |i, _| {
            let j = i % NZ;
            if j < N_ACTUATED {
                -u_max[j]
            } else {
                0.0
            }
        });
        let hi = DVector::from_fn(NZ * n, |i, _| {
            let j = i % NZ;
            if j < N_ACTUATED {
                u_max[j]
            } else {
                problem.config.tau_dot_max
            }
        });
        Self { lo, hi }
    }

    fn project(&self, z: &mut DVector<f64>) {
        for i in 0..z.len() {
            let v = if z[i].is_finite() { z[i] } else { 0.0 };
            z[i] = v.clamp(self.lo[i], self.hi[i]);
        }
    }
}

fn pack(guess: &OcpGuess) -> DVector<f64> {
    let n = guess.u.len();
    DVector::from_fn(NZ * n, |i, _| {
        let (k, j) = (i / NZ, i % NZ);
        if j < N_ACTUATED {
            guess.u[k][j]
        } else {
            guess.tau_dot[k]
        }
    })
}

fn unpack(z: &DVector<f64>) -> OcpGuess {
    let n = z.len() / NZ;
    OcpGuess {
        u: (0..n).map(|k| Vec5::from_fn(|j, _| z[NZ * k + j])).collect(),
        tau_dot: (0..n).map(|k| z[NZ * k + N_ACTUATED]).collect(),
    }
}

fn conform(guess: &OcpGuess, n: usize) -> OcpGuess {
    let mut g = guess.clone();
    if g.u.is_empty() || g.tau_dot.is_empty() {
        return OcpGuess { u: vec![Vec5::zeros(); n], tau_dot: vec![1.0; n] };
    }
    let (lu, lt) = (*g.u.last().unwrap(), *g.tau_dot.last().unwrap());
    g.u.resize(n, lu);
    g.tau_dot.resize(n, lt);
    g
}

/// Bound-respecting Gauss-Newton with Levenberg damping and an Armijo line
/// search along the projection arc. Returns the best iterate when the
/// iteration cap or the wall-clock budget is reached.
pub fn solve_mpc(
    problem: Problem<'_>,
    x_init: &CraneState,
    tau_init: f64,
    warm_start: Option<&OcpGuess>,
) -> Result<OcpSolution> {
    let started = Instant::now();
    problem.config.validate()?;
    x_init.check_finite()?;
    if !(tau_init.is_finite() && tau_init >= 0.0) {
        return Err(Error::InvalidState(format!("tau_init must be finite and non-negative, got {tau_init}")));
    }
    let settings = problem.config.solver;
    let deadline = settings.budget_ms.map(|ms| started + Duration::from_secs_f64(ms * 1e-3));
    let expired = || deadline.is_some_and(|d| Instant::now() >= d);

    let n = problem.config.horizon;
    let bounds = Bounds::new(&problem);
    let guess = match warm_start {
        Some(g) => conform(g, n),
        None => default_guess(&problem, tau_init),
    };
    let mut z = pack(&guess);
    bounds.project(&mut z);

    let mut current = evaluate(problem, x_init, tau_init, &unpack(&z), Order::Value)
        .map_err(|_| Error::NonFiniteObjective(f64::NAN))?;
    if !current.value.is_finite() {
        return Err(Error::NonFiniteObjective(current.value));
    }

    // an iteration is only started if the slowest one so far, plus a quarter
    // for timing noise, still fits
    let mut slowest = Duration::ZERO;
    let fits = |slowest: Duration| deadline.is_none_or(|d| Instant::now() + slowest + slowest / 4 < d);

    let mut damping = settings.initial_damping;
    let mut iterations = 0;
    'outer: while iterations < settings.max_iterations && fits(slowest) {
        let iteration_start = Instant::now();
        iterations += 1;
        let lin = match evaluate(problem, x_init, tau_init, &unpack(&z), Order::GaussNewton) {
            Ok(l) => l,
            Err(_) => break,
        };
        let grad = lin.gradient.as_ref().unwrap();
        let hess = lin.hessian.as_ref().unwrap();

        // variables pinned at a bound by the gradient stay fixed this step
        let tol = 1e-12;
        let free: Vec<usize> = (0..z.len())
            .filter(|&i| {
                let at_lo = z[i] <= bounds.lo[i] + tol && grad[i] > 0.0;
                let at_hi = z[i] >= bounds.hi[i] - tol && grad[i] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        let proj_grad = free.iter().map(|&i| grad[i] * grad[i]).sum::<f64>().sqrt();
        if free.is_empty() || proj_grad <= 1e-12 * (1.0 + current.value) {
            break;
        }
        let m = free.len();
        let h_ff = DMatrix::from_fn(m, m, |a, b| hess[(free[a], free[b])]);
        let g_f = DVector::from_fn(m, |a, _| grad[free[a]]);
        let diag_scale = (0..m).map(|a| h_ff[(a, a)]).fold(0.0, f64::max).max(1e-12);

        loop {
            let mut reg = h_ff.clone();
            for a in 0..m {
                reg[(a, a)] += damping * (h_ff[(a, a)] + 1e-6 * diag_scale);
            }
            let Some(chol) = Cholesky::new(reg) else {
                damping = (damping * 10.0).max(1e-8);
                if damping > 1e10 {
                    break 'outer;
                }
                continue;
            };
            let step_f = chol.solve(&(-&g_f));
            let mut step = DVector::zeros(z.len());
            for (a, &i) in free.iter().enumerate() {
                step[i] = step_f[a];
            }

            let mut alpha = 1.0;
            let mut accepted: Option<(DVector<f64>, Objective)> = None;
            for _ in 0..=settings.max_backtracks {
                let mut trial = &z + &step * alpha;
                bounds.project(&mut trial);
                let decrease = grad.dot(&(&trial - &z));
                if decrease < 0.0 {
                    if let Ok(obj) = evaluate(problem, x_init, tau_init, &unpack(&trial), Order::Value) {
                        if obj.value.is_finite() && obj.value <= current.value + settings.armijo * decrease {
                            accepted = Some((trial, obj));
                            break;
                        }
                    }
                }
                if expired() {
                    break 'outer;
                }
                alpha *= settings.backtrack;
            }

            match accepted {
                Some((trial, obj)) => {
                    let improvement = current.value - obj.value;
                    z = trial;
                    current = obj;
                    damping = (damping / 3.0).max(1e-9);
                    if improvement <= settings.tolerance * (1.0 + current.value) {
                        break 'outer;
                    }
                    slowest = slowest.max(iteration_start.elapsed());
                    break;
                }
                None => {
                    damping = (damping * 10.0).max(1e-8);
                    if damping > 1e10 || expired() {
                        break 'outer;
                    }
                }
            }
        }
    }

    let best = unpack(&z);
    let mut tau = Vec::with_capacity(n);
    let mut t = tau_init;
    for k in 0..n {
        tau.push(t);
        t += best.tau_dot[k] * problem.config.ts;
    }
    Ok(OcpSolution {
        states: current.states,
        u: best.u,
        tau,
        tau_dot: best.tau_dot,
        objective: current.value,
        penalties: current.penalties,
        iterations,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}
