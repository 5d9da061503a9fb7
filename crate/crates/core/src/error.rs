use thiserror::Error;

/// Errors raised by the analysis and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("state (u={u}, q={q}) is not feasible for K={k}")]
    InvalidState { u: usize, q: usize, k: usize },

    #[error("state space of {states} states exceeds the solver limit of {limit}")]
    SolverLimit { states: usize, limit: usize },

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("iterative solver did not converge after {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("success ratio undefined: mean number of EVs is zero")]
    UndefinedRatio,

    #[error("quadrature did not reach tolerance {requested:e} (achieved {achieved:e})")]
    Quadrature { requested: f64, achieved: f64 },

    #[error("Monte Carlo half-width {half_width:e} exceeds tolerance {tolerance:e}")]
    MonteCarloTolerance { half_width: f64, tolerance: f64 },

    #[error("simulation admitted no arrivals in the measurement window")]
    NoAdmissions,
}

pub type Result<T> = std::result::Result<T, Error>;
