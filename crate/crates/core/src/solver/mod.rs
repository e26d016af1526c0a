//! Dense QP and Gauss-Newton SQP for the planning problems.

mod qp;
mod sqp;

pub use qp::{qp_solve, QpSolution, QpSubproblem};
pub use sqp::{gradient_check, sqp_solve, MAX_LEVENBERG_RETRIES, STEP_TOLERANCE};
