use std::io::Write;

use super::{LogRow, Metrics, RunLog};
use crate::error::{Error, Result};

/// Column order of the per-control-step log. Every column is a deterministic
/// function of the scenario under an iteration-capped solver.
pub const LOG_COLUMNS: [&str; 36] = [
    "t",
    "q0", "q1", "q2", "q3", "q4", "q5", "q6",
    "qd0", "qd1", "qd2", "qd3", "qd4", "qd5", "qd6",
    "u0", "u1", "u2", "u3", "u4",
    "tau", "tau_dot", "flow",
    "sd_boom", "sd_arm", "sd_gripper",
    "substep_min_sd", "substep_max_flow",
    "objective",
    "pen_joint", "pen_accel", "pen_flow", "pen_collision", "pen_progress",
    "iterations",
    "failed",
];

/// Column order of the solve-time log, kept apart because wall times vary
/// between runs.
pub const TIMING_COLUMNS: [&str; 3] = ["t", "solve_ms", "iterations"];

fn io(e: impl std::fmt::Display) -> Error {
    Error::InvalidScenario(format!("writing run output failed: {e}"))
}

fn log_record(r: &LogRow, failed: bool) -> Vec<String> {
    let mut v = Vec::with_capacity(LOG_COLUMNS.len());
    v.push(r.t.to_string());
    v.extend(r.q.iter().map(f64::to_string));
    v.extend(r.qd.iter().map(f64::to_string));
    v.extend(r.u.iter().map(f64::to_string));
    v.extend([r.tau, r.tau_dot, r.flow].map(|x| x.to_string()));
    v.extend(r.sd.map(|x| x.to_string()));
    v.extend([r.substep_min_sd, r.substep_max_flow, r.objective].map(|x| x.to_string()));
    let p = r.penalties;
    v.extend([p.joint, p.accel, p.flow, p.collision, p.progress].map(|x| x.to_string()));
    v.push(r.iterations.to_string());
    v.push(u8::from(failed).to_string());
    v
}

impl RunLog {
    /// Writes the log CSV. The last row is flagged if the run stopped on a
    /// failure.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LOG_COLUMNS).map_err(io)?;
        let last = self.rows.len().saturating_sub(1);
        for (i, r) in self.rows.iter().enumerate() {
            w.write_record(log_record(r, self.failure.is_some() && i == last)).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn write_timing_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TIMING_COLUMNS).map_err(io)?;
        for r in &self.rows {
            w.write_record([r.t.to_string(), r.solve_ms.to_string(), r.iterations.to_string()]).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

impl Metrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidScenario(format!("malformed metrics: {e}")))
    }
}
