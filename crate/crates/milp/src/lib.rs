//! LP and MILP engine: bounded revised simplex, best-first branch-and-bound,
//! LP dualization and fixed-format MPS I/O.

pub mod bnb;
pub mod dual;
pub mod error;
mod lu;
pub mod model;
pub mod mps;
pub mod simplex;

pub use bnb::{solve_milp, solve_milp_with, MilpOptions, MilpSolution, MilpStatus};
pub use dual::{dualize, DualMap};
pub use error::{ModelError, MpsError};
pub use model::{Constraint, MilpModel, RowId, Sense, Var, VarKind, Variable, Violation};
pub use mps::{export_mps, import_mps, read_mps, write_mps};
pub use simplex::{solve_lp, solve_lp_with, Basis, LpOptions, LpSolution, LpStatus, VarState};
