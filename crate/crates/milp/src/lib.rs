//! A small mixed-integer linear programming toolkit: problem builder,
//! bounded dual simplex, branch and bound, an enumeration oracle for
//! cross-checking, and MPS export for handing models to other solvers.

mod bnb;
mod error;
mod lp;
mod lu;
pub mod mps;
mod oracle;
mod problem;

pub use bnb::{relative_gap, solve_milp, MilpSolution, SolveStats, SolveStatus, SolverConfig};
pub use error::MilpError;
pub use lp::{solve_lp, solve_lp_with, LpSolution, LpStatus, LpTolerances};
pub use mps::{export_mps, import_solution, parse_mps, ImportedSolution, NameMap};
pub use oracle::{enumerate_oracle, OracleOutcome, DEFAULT_MAX_INTEGERS};
pub use problem::{Constraint, MilpProblem, RowId, Sense, VarId, Variable};
