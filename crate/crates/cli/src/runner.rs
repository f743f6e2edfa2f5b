use std::fs;
use std::io::BufWriter;
use std::path::Path;

use forestry_mpc::sim::{metrics, run_closed_loop, Metrics, RunLog, ScenarioSpec};

use crate::exit;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    SolverFailure,
    Collision,
}

impl RunStatus {
    /// A run collides when any plant substep has a negative signed distance;
    /// baseline scenarios may declare that expected.
    pub fn classify(m: &Metrics) -> Self {
        if m.failure.is_some() || !m.completed {
            Self::SolverFailure
        } else if m.collided && !m.expect_collision {
            Self::Collision
        } else {
            Self::Ok
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Self::Ok => exit::OK,
            Self::SolverFailure => exit::SOLVER_FAILURE,
            Self::Collision => exit::COLLISION,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: RunLog,
    pub metrics: Metrics,
    pub status: RunStatus,
}

/// Runs the scenario and, if `out_dir` is given, writes `log.csv`,
/// `timing.csv` and `metrics.json` there.
pub fn execute(spec: &ScenarioSpec, out_dir: Option<&Path>) -> Result<RunOutcome, String> {
    let log = run_closed_loop(spec).map_err(|e| e.to_string())?;
    let metrics = metrics(&log, spec);
    if let Some(dir) = out_dir {
        write_outputs(dir, &log, &metrics).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    let status = RunStatus::classify(&metrics);
    Ok(RunOutcome { log, metrics, status })
}

pub fn write_outputs(dir: &Path, log: &RunLog, metrics: &Metrics) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let to_io = |e: forestry_mpc::Error| std::io::Error::other(e.to_string());
    log.write_csv(BufWriter::new(fs::File::create(dir.join("log.csv"))?)).map_err(to_io)?;
    log.write_timing_csv(BufWriter::new(fs::File::create(dir.join("timing.csv"))?)).map_err(to_io)?;
    fs::write(dir.join("metrics.json"), metrics.to_json() + "\n")
}
