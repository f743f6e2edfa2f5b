use serde::{Deserialize, Serialize};

use crate::crane::{passive_equilibrium, pendulum_period, Vec2, Vec5};
use crate::reference::plan_reference;

use super::{RunLog, ScenarioSpec};

/// Passive angle deviation from the hanging equilibrium below which the
/// pendulum counts as settled (rad).
pub const SETTLE_TOLERANCE: f64 = 0.02;
/// Passive rate below which the pendulum counts as settled (rad/s).
pub const SETTLE_RATE: f64 = 0.02;
/// How long both conditions must hold (s).
pub const SETTLE_HOLD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub completed: bool,
    pub failure: Option<String>,
    pub simulated_s: f64,
    pub pendulum_period_s: f64,
    /// Time from the last disturbance until the pendulum settled for good;
    /// `None` if it never did.
    pub settle_time_s: Option<f64>,
    pub settle_periods: Option<f64>,
    /// Minimum signed distance over the control instants (m).
    pub min_sd: f64,
    /// Minimum signed distance over every plant substep (m).
    pub min_continuous_sd: f64,
    pub collided: bool,
    pub expect_collision: bool,
    pub max_flow: f64,
    pub flow_limit: f64,
    pub tracking_rmse: f64,
    /// Largest actuated-joint distance to the final waypoint at the end.
    pub final_goal_error: f64,
    pub goal_reached: bool,
    pub final_actuated_speed: f64,
    pub mean_tau_dot_last_second: f64,
    pub solve_ms_mean: f64,
    pub solve_ms_p95: f64,
    pub solve_ms_max: f64,
}

/// First sample time after `t_start` from which the deviation and rate stay
/// within tolerance for [`SETTLE_HOLD`] seconds, measured from `t_start`.
/// Samples are `(t, passive deviation, passive rate)` in time order.
pub fn settle_time(samples: &[(f64, Vec2, Vec2)], t_start: f64) -> Option<f64> {
    let calm = |d: &Vec2, r: &Vec2| d.amax() < SETTLE_TOLERANCE && r.amax() < SETTLE_RATE;
    let end = samples.last()?.0;
    let mut since: Option<f64> = None;
    for (t, d, r) in samples.iter().filter(|s| s.0 >= t_start - 1e-9) {
        if calm(d, r) {
            let s = *since.get_or_insert(*t);
            if t - s >= SETTLE_HOLD - 1e-9 {
                return Some(s - t_start);
            }
        } else {
            since = None;
        }
    }
    since.filter(|s| end - s >= SETTLE_HOLD - 1e-9).map(|s| s - t_start)
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

pub fn metrics(log: &RunLog, spec: &ScenarioSpec) -> Metrics {
    let params = &spec.params;
    let goal = *spec.waypoints.last().unwrap();
    let spline = plan_reference(&spec.waypoints, &spec.v_limit, &spec.a_limit).ok();

    let mut samples: Vec<(f64, Vec2, Vec2)> = log
        .rows
        .iter()
        .map(|r| {
            let q_a = Vec5::from_fn(|i, _| r.q[i]);
            let eq = passive_equilibrium(params, &q_a);
            (r.t, Vec2::new(r.q[5], r.q[6]) - eq, Vec2::new(r.qd[5], r.qd[6]))
        })
        .collect();
    let end_t = log.rows.last().map_or(0.0, |r| r.t + spec.control_period);
    if log.failure.is_none() {
        let f = &log.final_state;
        samples.push((end_t, f.q_p() - passive_equilibrium(params, &f.q_a()), f.qd_p()));
    }
    let t_dist = spec.disturbances.iter().map(|d| d.time).fold(0.0, f64::max);
    let settle = settle_time(&samples, t_dist);
    let period = pendulum_period(params, &spec.initial.q_a());

    let min_sd = log.rows.iter().flat_map(|r| r.sd).fold(f64::INFINITY, f64::min);
    let min_continuous_sd = log.rows.iter().map(|r| r.substep_min_sd).fold(f64::INFINITY, f64::min);
    let max_flow = log.rows.iter().map(|r| r.substep_max_flow).fold(0.0, f64::max);

    let tracking_rmse = match &spline {
        Some(s) if !log.rows.is_empty() => {
            let sq: f64 = log
                .rows
                .iter()
                .map(|r| (Vec5::from_fn(|i, _| r.q[i]) - s.eval(r.tau)).norm_squared())
                .sum();
            (sq / (5 * log.rows.len()) as f64).sqrt()
        }
        _ => f64::NAN,
    };

    let final_goal_error = (log.final_state.q_a() - goal).amax();
    let last_second: Vec<f64> =
        log.rows.iter().filter(|r| r.t >= end_t - 1.0 - 1e-9).map(|r| r.tau_dot).collect();
    let mean_tau_dot_last_second =
        if last_second.is_empty() { f64::NAN } else { last_second.iter().sum::<f64>() / last_second.len() as f64 };

    let mut solve: Vec<f64> = log.rows.iter().filter(|r| r.iterations > 0).map(|r| r.solve_ms).collect();
    solve.sort_by(f64::total_cmp);
    let solve_ms_mean = if solve.is_empty() { 0.0 } else { solve.iter().sum::<f64>() / solve.len() as f64 };

    Metrics {
        scenario: spec.name.clone(),
        completed: log.failure.is_none() && log.rows.len() == spec.control_steps(),
        failure: log.failure.as_ref().map(|f| format!("t = {:.3} s: {}", f.t, f.message)),
        simulated_s: end_t,
        pendulum_period_s: period,
        settle_time_s: settle,
        settle_periods: settle.map(|s| s / period),
        min_sd,
        min_continuous_sd,
        collided: min_continuous_sd <= 0.0,
        expect_collision: spec.expect_collision,
        max_flow,
        flow_limit: params.q_flow_max,
        tracking_rmse,
        final_goal_error,
        goal_reached: final_goal_error <= spec.goal_tolerance,
        final_actuated_speed: log.final_state.qd_a().norm(),
        mean_tau_dot_last_second,
        solve_ms_mean,
        solve_ms_p95: percentile(&solve, 95.0),
        solve_ms_max: solve.last().copied().unwrap_or(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn damped(decay: f64) -> Vec<(f64, Vec2, Vec2)> {
        let w = std::f64::consts::PI;
        (0..=400)
            .map(|i| {
                let t = i as f64 * 0.05;
                let a = 0.2 * (-decay * t).exp();
                let d = a * (w * t).sin();
                let r = a * (w * (w * t).cos() - decay * (w * t).sin());
                (t, Vec2::new(d, 0.0), Vec2::new(r, 0.0))
            })
            .collect()
    }

    #[test]
    fn calm_log_settles_immediately() {
        let s: Vec<_> = (0..50).map(|i| (i as f64 * 0.1, Vec2::zeros(), Vec2::zeros())).collect();
        assert_eq!(settle_time(&s, 0.0), Some(0.0));
    }

    #[test]
    fn short_calm_tail_does_not_count() {
        let mut s: Vec<_> = (0..50).map(|i| (i as f64 * 0.1, Vec2::new(0.1, 0.0), Vec2::zeros())).collect();
        for x in s.iter_mut().skip(40) {
            x.1 = Vec2::zeros();
        }
        assert_eq!(settle_time(&s, 0.0), None);
    }

    #[test]
    fn faster_decay_settles_sooner() {
        let slow = settle_time(&damped(0.3), 0.0).unwrap();
        let fast = settle_time(&damped(0.8), 0.0).unwrap();
        assert!(fast < slow, "fast {fast} slow {slow}");
        // envelope 0.2·exp(−λt)·π < 0.02 bounds the rate condition
        let bound = |l: f64| (0.2 * std::f64::consts::PI / 0.02_f64).ln() / l;
        assert!(slow <= bound(0.3) + 0.05 && fast <= bound(0.8) + 0.05);
    }

    #[test]
    fn percentile_ranks() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 95.0), 95.0);
        assert_eq!(percentile(&v[..1], 95.0), 1.0);
    }
}
