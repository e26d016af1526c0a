use serde::{Deserialize, Serialize};

use super::model::{ControlVec, PlanModel};
use super::problem::{build_problem, warm_start, MpcConfig, MpcSolution, PlannerState};
use crate::dynamics::{VehicleParams, VehicleState};
use crate::envelope::EnvelopeFit;
use crate::error::Result;
use crate::solver::sqp_solve;
use crate::track::{relevant_obstacles, Obstacle, PathWindow, RefPath, MIN_WINDOW_LENGTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Proposed,
    Kinematic,
}

/// Output of one replanning step.
#[derive(Debug, Clone)]
pub struct Plan {
    /// Simulation time at which the plan starts (s).
    pub t0: f64,
    pub s0: f64,
    pub window: PathWindow,
    pub solution: MpcSolution,
    pub obstacles_considered: usize,
}

/// Receding-horizon planner: window selection, obstacle filtering and
/// warm-started solves.
#[derive(Debug, Clone)]
pub struct Planner {
    pub kind: ModelKind,
    pub config: MpcConfig,
    pub envelope: EnvelopeFit,
    pub params: VehicleParams,
    pub mu: f64,
    previous: Option<Plan>,
}

/// Arc-length range around the last plan searched when projecting (m).
pub const PROJECTION_REACH: f64 = 20.0;

/// Two-stage window choice: a first fit over `max(v0 T, 10)` bounds the
/// speed, then the final window covers `T max(v0, v_max)`.
pub fn select_window(path: &RefPath, s0: f64, v0: f64, ax_max: f64, horizon: f64, mu: f64) -> Result<PathWindow> {
    let first = PathWindow::fit(path, s0, (v0 * horizon).max(MIN_WINDOW_LENGTH))?;
    let v_first = first.speed_limit(v0, ax_max, horizon, mu);
    let length = (horizon * v0.max(v_first)).max(MIN_WINDOW_LENGTH);
    let window = PathWindow::fit(path, s0, length)?;
    let v_max = v_first.min(window.speed_limit(v0, ax_max, horizon, mu));
    Ok(PathWindow { v_max, ..window })
}

impl Planner {
    pub fn new(kind: ModelKind, config: MpcConfig, envelope: EnvelopeFit, params: VehicleParams, mu: f64) -> Self {
        Planner {
            kind,
            config,
            envelope,
            params,
            mu,
            previous: None,
        }
    }

    pub fn model(&self) -> PlanModel {
        match self.kind {
            ModelKind::Proposed => PlanModel::Proposed {
                gamma: self.envelope.gamma,
            },
            ModelKind::Kinematic => PlanModel::Kinematic {
                lf: self.params.lf,
                lr: self.params.lr,
            },
        }
    }

    pub fn initial_state(&self, state: &VehicleState, s0: f64) -> PlannerState {
        match self.kind {
            ModelKind::Proposed => PlannerState {
                x: state.x,
                y: state.y,
                psi: state.yaw,
                vx: state.vx,
                vy: state.vy,
                vpsi: state.yaw_rate,
                s: s0,
            },
            ModelKind::Kinematic => PlannerState {
                x: state.x,
                y: state.y,
                psi: state.yaw,
                vx: state.vx.hypot(state.vy),
                vy: 0.0,
                vpsi: 0.0,
                s: s0,
            },
        }
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }

    /// Plans from `state` at simulation time `t`.
    pub fn plan(&mut self, t: f64, state: &VehicleState, path: &RefPath, obstacles: &[Obstacle]) -> Result<Plan> {
        let v0 = state.vx;
        let projection = match &self.previous {
            Some(prev) => {
                let reach = PROJECTION_REACH + v0.abs() * (t - prev.t0).max(0.0);
                path.project_between(state.x, state.y, prev.s0 - PROJECTION_REACH, prev.s0 + reach)?
            }
            None => path.project(state.x, state.y)?,
        };
        let s0 = projection.s;
        let horizon = self.config.horizon();
        let window = select_window(path, s0, v0, self.envelope.ax_max(v0), horizon, self.mu)?;
        let relevant = relevant_obstacles(obstacles, s0, v0, horizon);
        let parabolas = relevant.iter().map(|o| o.parabola(self.params.half_width)).collect();
        let xi0 = self.initial_state(state, s0);
        let problem = build_problem(
            self.model(),
            &xi0,
            window.clone(),
            &self.envelope,
            self.params.steer_max,
            parabolas,
            self.config,
        );
        let guess: Vec<ControlVec> = match &self.previous {
            Some(prev) if t - prev.t0 <= 2.0 * self.config.replan_period + 1e-9 => {
                warm_start(&prev.solution, t - prev.t0, self.config.steps)
            }
            _ => vec![ControlVec::zeros(); self.config.steps],
        };
        let solution = sqp_solve(&problem, &guess, self.config.max_iterations);
        let plan = Plan {
            t0: t,
            s0,
            window,
            solution,
            obstacles_considered: relevant.len(),
        };
        self.previous = Some(plan.clone());
        Ok(plan)
    }
}
