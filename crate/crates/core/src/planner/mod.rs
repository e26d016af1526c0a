//! Receding-horizon trajectory planning over a local quintic fit of the
//! reference path, with either the envelope-constrained double integrator
//! or a kinematic bicycle as prediction model.

mod model;
#[allow(clippy::module_inception)]
mod planner;
mod problem;

pub use model::{
    f_2di, f_bicycle, ControlJac, ControlVec, PlanModel, StateJac, StateVec, IPSI, IS, IVPSI, IVX, IVY, IX, IY, NU, NX,
};
pub use planner::{select_window, ModelKind, Plan, Planner, PROJECTION_REACH};
pub use problem::{
    build_problem, warm_start, ControlBounds, Linearization, MpcConfig, MpcProblem, MpcSolution, PlanControl,
    PlannerState, SolveStats, Termination,
};
