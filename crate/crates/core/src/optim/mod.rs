//! Small dense LP and binary-IP solvers.
//!
//! Both solvers work on explicit problem descriptions and hold no state
//! between calls, so instances can be solved from several threads at once.
//! Tolerances are fixed constants so that results are reproducible.

mod ip;
mod lp;
mod lp_text;

pub use ip::{solve_binary_ip, BranchAndBound, IntegerProgram, IpStats, DEFAULT_NODE_LIMIT};
pub use lp::{solve_lp, Constraint, LinearProgram, LpSolution, LpStatus, Relation};

use thiserror::Error;

/// Constraint feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Variable bound tolerance.
pub const BOUND_TOL: f64 = 1e-9;
/// Integrality tolerance.
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Pivot elements at or below this magnitude are treated as zero.
pub const ZERO_PIVOT: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("branch-and-bound node limit of {0} exceeded")]
    NodeLimitExceeded(usize),
}

impl OptimError {
    pub fn code(&self) -> &'static str {
        match self {
            OptimError::InvalidProblem(_) => "invalid-problem",
            OptimError::NumericalBreakdown(_) => "numerical-breakdown",
            OptimError::NodeLimitExceeded(_) => "node-limit-exceeded",
        }
    }
}
