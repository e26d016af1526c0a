//! Trajectory planning for high-speed driving near the handling limits.
//!
//! The crate is organised around the planning loop:
//!
//! * [`dynamics`]: a 9-DOF vehicle simulator (planar body motion, roll, pitch
//!   and four wheel spins) used as the plant and as the sampling source for the
//!   acceleration envelope.
//! * [`envelope`]: offline identification of the feasible acceleration set and
//!   its convex approximation.
//! * [`track`]: reference paths, local quintic fits and parabolic obstacle
//!   constraints.
//! * [`planner`]: the optimal-control transcription for the constrained double
//!   integrator and the kinematic bicycle baseline.
//! * [`solver`]: an iteration-capped Gauss-Newton SQP on top of a dense dual
//!   active-set QP solver.
//! * [`control`]: low-level PID tracking with look-ahead.
//! * [`harness`]: closed-loop scenarios, metrics and CSV output.

pub mod control;
pub mod dynamics;
pub mod envelope;
mod error;
pub mod harness;
pub mod planner;
pub mod solver;
pub mod track;

pub use error::{Error, Result};

/// Standard gravity (m/s²).
pub const GRAVITY: f64 = 9.81;
