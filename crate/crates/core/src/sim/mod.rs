//! Closed-loop simulation: a finely integrated plant, the MPC at the control
//! rate, scheduled disturbances and obstacle changes, and run metrics.

mod metrics;
mod output;
mod run;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::collision::{decompose_links, CollisionGeometry};
use crate::crane::{CraneParams, CraneState, Vec2, Vec5, Vec7, N_JOINTS};
use crate::error::{Error, Result};
use crate::mpc::MpcConfig;

pub use metrics::{metrics, settle_time, Metrics, SETTLE_HOLD, SETTLE_RATE, SETTLE_TOLERANCE};
pub use output::{LOG_COLUMNS, TIMING_COLUMNS};
pub use run::{apply_disturbance, reference_clearance, run_closed_loop, step_plant, LogRow, RunFailure, RunLog};

/// Axis-aligned box obstacle present from `insert_at` until `remove_at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleEvent {
    pub name: String,
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
    pub insert_at: f64,
    pub remove_at: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub time: f64,
    /// Instantaneous change of the passive joint rates (rad/s).
    pub impulse: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub origin: Vector3<f64>,
    pub resolution: f64,
    pub dims: [usize; 3],
    pub d_max: f64,
    pub obstacles: Vec<ObstacleEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    Mpc,
    /// Zero velocity command throughout; the uncontrolled baseline.
    Hold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub params: CraneParams,
    pub geometry: CollisionGeometry,
    pub initial: CraneState,
    pub waypoints: Vec<Vec5>,
    pub v_limit: Vec5,
    pub a_limit: Vec5,
    pub environment: Environment,
    pub disturbances: Vec<Disturbance>,
    pub mpc: MpcConfig,
    pub controller: Controller,
    pub plant_dt: f64,
    pub control_period: f64,
    pub duration: f64,
    pub goal_tolerance: f64,
    /// Baseline runs that are expected to collide.
    pub expect_collision: bool,
}

impl ScenarioSpec {
    /// Number of plant steps per control period.
    pub fn substeps(&self) -> usize {
        (self.control_period / self.plant_dt).round() as usize
    }

    /// Number of control steps (log rows) in a complete run.
    pub fn control_steps(&self) -> usize {
        (self.duration / self.control_period).round() as usize
    }

    /// Every problem with the scenario, one message each.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.params.validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.geometry.validate() {
            out.push(format!("collision geometry: {e}"));
        }
        if let Err(e) = self.mpc.validate() {
            out.push(e.to_string());
        }
        if !self.initial.is_finite() {
            out.push("initial state is not finite".into());
        }
        if self.waypoints.is_empty() {
            out.push("reference needs at least one waypoint".into());
        }
        if self.v_limit.iter().chain(self.a_limit.iter()).any(|&v| !(v > 0.0 && v.is_finite())) {
            out.push("reference velocity and acceleration limits must be positive".into());
        }
        if !(self.plant_dt > 0.0 && self.plant_dt <= 1e-2) {
            out.push(format!("plant dt must lie in (0, 0.01] s, got {}", self.plant_dt));
        }
        let ratio = self.control_period / self.plant_dt;
        if !(self.control_period > 0.0) || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            out.push(format!(
                "control period {} s is not an integer multiple of plant dt {} s",
                self.control_period, self.plant_dt
            ));
        }
        if (self.mpc.ts - self.control_period).abs() > 1e-12 {
            out.push(format!(
                "control period {} s differs from the MPC shooting interval {} s; the warm start shifts by one interval",
                self.control_period, self.mpc.ts
            ));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            out.push(format!("duration must be positive, got {}", self.duration));
        } else {
            let steps = self.duration / self.control_period;
            if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                out.push(format!("duration {} s is not a whole number of control periods", self.duration));
            }
        }
        if !(self.goal_tolerance > 0.0) {
            out.push(format!("goal tolerance must be positive, got {}", self.goal_tolerance));
        }
        for (i, d) in self.disturbances.iter().enumerate() {
            if !(d.time >= 0.0 && d.time <= self.duration) {
                out.push(format!("disturbance {i} at t = {} s lies outside [0, {}] s", d.time, self.duration));
            }
            if !d.impulse.iter().all(|v| v.is_finite()) {
                out.push(format!("disturbance {i} has a non-finite impulse"));
            }
        }
        let env = &self.environment;
        if !(env.resolution > 0.0) || env.dims.contains(&0) {
            out.push("environment grid needs a positive resolution and non-zero dims".into());
        }
        if !(env.d_max > 0.0) {
            out.push(format!("environment d_max must be positive, got {}", env.d_max));
        }
        for ob in &env.obstacles {
            if (0..3).any(|a| !(ob.min[a] <= ob.max[a])) {
                out.push(format!("obstacle '{}' has min corner above max corner", ob.name));
            }
            if !(ob.insert_at >= 0.0 && ob.insert_at <= self.duration) {
                out.push(format!(
                    "obstacle '{}' inserted at t = {} s, outside the run duration {} s",
                    ob.name, ob.insert_at, self.duration
                ));
            }
            if let Some(r) = ob.remove_at {
                if !(r > ob.insert_at && r <= self.duration) {
                    out.push(format!("obstacle '{}' removed at t = {r} s, outside (insert, duration]", ob.name));
                }
            }
        }
        if out.is_empty() {
            if let Some(msg) = self.coverage_gap() {
                out.push(msg);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.diagnostics();
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(d.join("; ")))
        }
    }

    /// Checks that the mapped volume contains every sphere the crane can
    /// reach within its joint limits, sampled on a per-joint lattice.
    pub fn coverage_gap(&self) -> Option<String> {
        let (lo, hi) = reachable_bounds(&self.params, &self.geometry, self.environment.resolution);
        let env = &self.environment;
        let g_lo = env.origin;
        let g_hi = env.origin + Vector3::from_fn(|a, _| env.dims[a] as f64 * env.resolution);
        let axes = ["x", "y", "z"];
        let gaps: Vec<String> = (0..3)
            .filter(|&a| lo[a] < g_lo[a] || hi[a] > g_hi[a])
            .map(|a| {
                format!(
                    "{}: reachable [{:.2}, {:.2}] m vs grid [{:.2}, {:.2}] m",
                    axes[a], lo[a], hi[a], g_lo[a], g_hi[a]
                )
            })
            .collect();
        (!gaps.is_empty()).then(|| format!("environment grid does not cover the reachable workspace ({})", gaps.join(", ")))
    }
}

/// Bounding box of all collision spheres over a lattice of joint values.
pub fn reachable_bounds(params: &CraneParams, geometry: &CollisionGeometry, resolution: f64) -> (Vector3<f64>, Vector3<f64>) {
    let samples: Vec<Vec<f64>> = (0..N_JOINTS)
        .map(|j| {
            let n = if j == 0 { 17 } else { 5 };
            (0..n).map(|i| params.q_min[j] + (params.q_max[j] - params.q_min[j]) * i as f64 / (n - 1) as f64).collect()
        })
        .collect();
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    let mut idx = [0usize; N_JOINTS];
    loop {
        let q = Vec7::from_fn(|j, _| samples[j][idx[j]]);
        for s in decompose_links(params, geometry, &q, resolution).links.iter().flatten() {
            lo = lo.inf(&(s.center - Vector3::repeat(s.radius)));
            hi = hi.sup(&(s.center + Vector3::repeat(s.radius)));
        }
        let mut j = 0;
        loop {
            if j == N_JOINTS {
                return (lo, hi);
            }
            idx[j] += 1;
            if idx[j] < samples[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}
