use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid crane parameters: {0}")]
    InvalidParams(String),

    #[error("passive inertia block is near-singular (condition number {cond:.3e})")]
    SingularPassiveInertia { cond: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("reference planning failed: {0}")]
    Reference(String),

    #[error("invalid MPC configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite objective at the initial guess ({0})")]
    NonFiniteObjective(f64),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("malformed grid dump: {0}")]
    GridDump(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
