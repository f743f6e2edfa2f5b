//! Sway-damping, collision-aware MPC over the actuated velocity commands and
//! the reference time-progress rate.
//!
//! All inequality constraints are relaxed into one-sided quadratic penalties
//! with a margin, which leaves a smooth problem with simple bounds on the
//! decision variables. The problem is solved by single shooting with
//! projected Gauss-Newton steps.

mod objective;
mod solver;

use serde::{Deserialize, Serialize};

use crate::crane::{CraneParams, CraneState, Vec5};
use crate::error::{Error, Result};

pub use objective::{
    discretize_step, discretize_step_jacobians, stage_cost, total_objective, Objective, Problem, StepJacobians,
};
pub use solver::{shift_warm_start, solve_mpc};

/// Penalty weight paired with a margin.
pub fn mu_for(epsilon: f64) -> f64 {
    10.0 / epsilon
}

/// One-sided quadratic with margin: `(μ/2)(h − ε)²` below `ε`, zero above.
pub fn penalty(h: f64, epsilon: f64, mu: f64) -> f64 {
    if h >= epsilon {
        0.0
    } else {
        0.5 * mu * (h - epsilon) * (h - epsilon)
    }
}

/// `d penalty / dh`.
pub fn penalty_derivative(h: f64, epsilon: f64, mu: f64) -> f64 {
    if h >= epsilon {
        0.0
    } else {
        mu * (h - epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Weights {
    pub track: f64,
    pub damp: f64,
    pub vel: f64,
    pub accl: f64,
    pub prog: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { track: 1.0, damp: 0.1, vel: 0.01, accl: 0.1, prog: 0.2 }
    }
}

/// Penalty margins. Joint, acceleration and flow margins are fractions of
/// the respective admissible range; collision and progress margins are
/// absolute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Margins {
    /// m
    pub collision: f64,
    pub joint_fraction: f64,
    pub accel_fraction: f64,
    /// Fraction of `Q_max`; the flow residual is measured in units of `Q_max`.
    pub flow_fraction: f64,
    /// Applies below the upper `τ̇` bound only.
    pub progress: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Self { collision: 0.2, joint_fraction: 0.05, accel_fraction: 0.05, flow_fraction: 0.05, progress: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Wall-clock budget per solve; `None` runs to the iteration cap.
    pub budget_ms: Option<f64>,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub initial_damping: f64,
    /// Relative objective decrease below which the solve is converged.
    pub tolerance: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            budget_ms: Some(70.0),
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 12,
            initial_damping: 1e-3,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    pub horizon: usize,
    /// Shooting interval (s).
    pub ts: f64,
    pub weights: Weights,
    pub margins: Margins,
    pub tau_dot_max: f64,
    pub collision_penalty: bool,
    pub flow_penalty: bool,
    pub solver: SolverSettings,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 40,
            ts: 0.1,
            weights: Weights::default(),
            margins: Margins::default(),
            tau_dot_max: 1.5,
            collision_penalty: true,
            flow_penalty: true,
            solver: SolverSettings::default(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if self.horizon < 2 {
            issues.push(format!("horizon must be at least 2, got {}", self.horizon));
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            issues.push(format!("ts must be positive, got {}", self.ts));
        }
        let w = self.weights;
        for (name, v) in [("track", w.track), ("damp", w.damp), ("vel", w.vel), ("accl", w.accl), ("prog", w.prog)] {
            if !(v >= 0.0 && v.is_finite()) {
                issues.push(format!("weight {name} must be non-negative, got {v}"));
            }
        }
        let m = self.margins;
        for (name, v) in [
            ("collision", m.collision),
            ("joint_fraction", m.joint_fraction),
            ("accel_fraction", m.accel_fraction),
            ("flow_fraction", m.flow_fraction),
            ("progress", m.progress),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                issues.push(format!("margin {name} must be positive, got {v}"));
            }
        }
        if !(self.tau_dot_max > 0.0 && self.tau_dot_max.is_finite()) {
            issues.push(format!("tau_dot_max must be positive, got {}", self.tau_dot_max));
        }
        let s = self.solver;
        if s.max_iterations == 0 {
            issues.push("solver.max_iterations must be at least 1".into());
        }
        if let Some(b) = s.budget_ms {
            if !(b > 0.0 && b.is_finite()) {
                issues.push(format!("solver.budget_ms must be positive, got {b}"));
            }
        }
        if !(s.armijo > 0.0 && s.armijo < 1.0) || !(s.backtrack > 0.0 && s.backtrack < 1.0) {
            issues.push("solver.armijo and solver.backtrack must lie in (0, 1)".into());
        }
        if !(s.initial_damping >= 0.0) || !(s.tolerance >= 0.0) {
            issues.push("solver.initial_damping and solver.tolerance must be non-negative".into());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(issues.join("; ")))
        }
    }

    /// Margins and weights of every penalty group for the given crane.
    pub fn penalty_groups(&self, params: &CraneParams) -> PenaltyGroups {
        let m = self.margins;
        let joint = (params.q_max - params.q_min) * m.joint_fraction;
        let accel = (params.qdd_a_max - params.qdd_a_min) * m.accel_fraction;
        PenaltyGroups {
            joint: std::array::from_fn(|i| Margin::new(joint[i])),
            accel: std::array::from_fn(|i| Margin::new(accel[i])),
            flow: Margin::new(m.flow_fraction),
            collision: Margin::new(m.collision),
            progress: Margin::new(m.progress),
        }
    }
}

/// Margin `ε` and its weight `μ = 10/ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    pub epsilon: f64,
    pub mu: f64,
}

impl Margin {
    pub fn new(epsilon: f64) -> Self {
        Self { epsilon, mu: mu_for(epsilon) }
    }

    pub fn cost(&self, h: f64) -> f64 {
        penalty(h, self.epsilon, self.mu)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyGroups {
    pub joint: [Margin; 7],
    pub accel: [Margin; 5],
    pub flow: Margin,
    pub collision: Margin,
    pub progress: Margin,
}

/// Penalty totals per constraint group over the horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltyTotals {
    pub joint: f64,
    pub accel: f64,
    pub flow: f64,
    pub collision: f64,
    pub progress: f64,
}

impl PenaltyTotals {
    pub fn sum(&self) -> f64 {
        self.joint + self.accel + self.flow + self.collision + self.progress
    }
}

/// Decision variables of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpGuess {
    pub u: Vec<Vec5>,
    pub tau_dot: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    /// `states[k]` is the state reached after holding `u[k]` for one interval.
    pub states: Vec<CraneState>,
    pub u: Vec<Vec5>,
    /// Progress at the start of each interval; `tau[0]` is the initial value.
    pub tau: Vec<f64>,
    pub tau_dot: Vec<f64>,
    pub objective: f64,
    pub penalties: PenaltyTotals,
    pub iterations: usize,
    pub wall_time_ms: f64,
}

impl OcpSolution {
    pub fn as_guess(&self) -> OcpGuess {
        OcpGuess { u: self.u.clone(), tau_dot: self.tau_dot.clone() }
    }

    /// Progress after the last interval.
    pub fn tau_end(&self, ts: f64) -> f64 {
        self.tau.last().unwrap() + self.tau_dot.last().unwrap() * ts
    }
}
