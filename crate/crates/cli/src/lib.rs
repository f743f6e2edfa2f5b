//! Scenario files, bundled experiments, closed-loop runs and reports for the
//! forestry crane MPC. The `crane-mpc` binary is a thin layer over this crate.

pub mod bundled;
pub mod report;
pub mod runner;
pub mod scenario;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// I/O failure while reading inputs or writing outputs.
    pub const IO: u8 = 1;
    /// Bad command line.
    pub const USAGE: u8 = 2;
    /// Scenario or run directory failed validation.
    pub const VALIDATION: u8 = 3;
    pub const SOLVER_FAILURE: u8 = 4;
    /// The run completed but the crane touched an obstacle.
    pub const COLLISION: u8 = 5;
}

pub use runner::{execute, RunOutcome, RunStatus};
pub use scenario::{load, Diagnostics, LoadedScenario, ScenarioFile};
