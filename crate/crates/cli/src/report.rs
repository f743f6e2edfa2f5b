//! Comparison table over finished runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use forestry_mpc::sim::Metrics;
use serde::Serialize;

/// One run with its paired differences. Runs named `<stem>_on` and
/// `<stem>_off` are partners; each `delta_*` is this run minus its partner.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub run_dir: String,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub partner: Option<String>,
    pub delta_min_sd: Option<f64>,
    pub delta_min_continuous_sd: Option<f64>,
    pub delta_settle_periods: Option<f64>,
    pub delta_max_flow: Option<f64>,
    pub delta_final_goal_error: Option<f64>,
}

pub const REPORT_COLUMNS: [&str; 22] = [
    "scenario",
    "run_dir",
    "completed",
    "collided",
    "expect_collision",
    "min_sd",
    "min_continuous_sd",
    "settle_time_s",
    "settle_periods",
    "max_flow",
    "flow_limit",
    "tracking_rmse",
    "final_goal_error",
    "goal_reached",
    "final_actuated_speed",
    "solve_ms_p95",
    "partner",
    "delta_min_sd",
    "delta_min_continuous_sd",
    "delta_settle_periods",
    "delta_max_flow",
    "delta_final_goal_error",
];

/// Name without its `_on` / `_off` suffix, and whether it had one.
fn split_pair(name: &str) -> Option<(&str, bool)> {
    name.strip_suffix("_on").map(|s| (s, true)).or_else(|| name.strip_suffix("_off").map(|s| (s, false)))
}

pub fn read_metrics(dir: &Path) -> Result<Metrics, String> {
    let path = dir.join("metrics.json");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: missing or unreadable metrics ({e})", path.display()))?;
    Metrics::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn build(runs: &[(PathBuf, Metrics)]) -> Vec<ReportRow> {
    let diff = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a - b);
    runs.iter()
        .map(|(dir, m)| {
            let partner = split_pair(&m.scenario).and_then(|(stem, on)| {
                runs.iter().map(|(_, p)| p).find(|p| split_pair(&p.scenario) == Some((stem, !on)))
            });
            let d = |f: fn(&Metrics) -> Option<f64>| partner.and_then(|p| diff(f(m), f(p)));
            ReportRow {
                run_dir: dir.display().to_string(),
                metrics: m.clone(),
                partner: partner.map(|p| p.scenario.clone()),
                delta_min_sd: d(|m| Some(m.min_sd)),
                delta_min_continuous_sd: d(|m| Some(m.min_continuous_sd)),
                delta_settle_periods: d(|m| m.settle_periods),
                delta_max_flow: d(|m| Some(m.max_flow)),
                delta_final_goal_error: d(|m| Some(m.final_goal_error)),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS).expect("in-memory write");
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            m.scenario.clone(),
            r.run_dir.clone(),
            m.completed.to_string(),
            m.collided.to_string(),
            m.expect_collision.to_string(),
            m.min_sd.to_string(),
            m.min_continuous_sd.to_string(),
            opt(m.settle_time_s),
            opt(m.settle_periods),
            m.max_flow.to_string(),
            m.flow_limit.to_string(),
            m.tracking_rmse.to_string(),
            m.final_goal_error.to_string(),
            m.goal_reached.to_string(),
            m.final_actuated_speed.to_string(),
            m.solve_ms_p95.to_string(),
            r.partner.clone().unwrap_or_default(),
            opt(r.delta_min_sd),
            opt(r.delta_min_continuous_sd),
            opt(r.delta_settle_periods),
            opt(r.delta_max_flow),
            opt(r.delta_final_goal_error),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn to_json(rows: &[ReportRow]) -> String {
    let mut s = serde_json::to_string_pretty(rows).expect("report serializes");
    let _ = writeln!(s);
    s
}
