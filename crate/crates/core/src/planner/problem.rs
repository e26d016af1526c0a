use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::*;
use crate::envelope::EnvelopeFit;
use crate::track::{poly_eval, ObstacleParabola, PathWindow};

/// Transcription and weighting of the planning problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    /// Step length (s).
    pub h: f64,
    /// Number of steps.
    pub steps: usize,
    pub w_v: f64,
    pub w_x: f64,
    pub w_y: f64,
    pub w_o: f64,
    /// Small control penalty that keeps the subproblems strictly convex.
    pub w_u: f64,
    pub max_iterations: usize,
    /// Replanning period (s).
    pub replan_period: f64,
    /// Points per step at which obstacle constraints are checked, evenly
    /// spaced on the segment between consecutive nodes and ending at the
    /// node. They share the step's slack.
    pub obstacle_samples: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            h: 0.2,
            steps: 15,
            w_v: 1.0,
            w_x: 10.0,
            w_y: 10.0,
            w_o: 100.0,
            w_u: 1e-3,
            max_iterations: 5,
            replan_period: 0.1,
            obstacle_samples: 4,
        }
    }
}

impl MpcConfig {
    /// Defaults for the kinematic baseline, which gets one extra iteration.
    pub fn kinematic() -> Self {
        MpcConfig {
            max_iterations: 6,
            ..Default::default()
        }
    }

    pub fn horizon(&self) -> f64 {
        self.h * self.steps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlannerState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub vx: f64,
    pub vy: f64,
    pub vpsi: f64,
    pub s: f64,
}

impl PlannerState {
    pub fn to_vec(&self) -> StateVec {
        StateVec::from([self.x, self.y, self.psi, self.vx, self.vy, self.vpsi, self.s])
    }

    pub fn from_vec(v: &StateVec) -> Self {
        PlannerState {
            x: v[IX],
            y: v[IY],
            psi: v[IPSI],
            vx: v[IVX],
            vy: v[IVY],
            vpsi: v[IVPSI],
            s: v[IS],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanControl {
    Proposed { ux: f64, uy: f64, upsi: f64 },
    Kinematic { a: f64, delta: f64 },
}

impl PlanControl {
    pub fn from_vec(model: &PlanModel, u: &ControlVec) -> Self {
        match *model {
            PlanModel::Proposed { gamma } => PlanControl::Proposed {
                ux: u[0],
                uy: u[1],
                upsi: gamma * u[1],
            },
            PlanModel::Kinematic { .. } => PlanControl::Kinematic { a: u[0], delta: u[1] },
        }
    }

    pub fn longitudinal(&self) -> f64 {
        match *self {
            PlanControl::Proposed { ux, .. } => ux,
            PlanControl::Kinematic { a, .. } => a,
        }
    }
}

/// Admissible set of one control.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBounds {
    /// Box on the first control.
    pub u0: (f64, f64),
    /// Box on the second control.
    pub u1: (f64, f64),
    /// Ellipse semi-axes for `(u0, u1)`.
    pub ellipse: Option<(f64, f64)>,
    /// Rows `n . u <= b`.
    pub half_planes: Vec<([f64; 2], f64)>,
}

impl ControlBounds {
    pub fn from_envelope(fit: &EnvelopeFit, vx0: f64) -> Self {
        ControlBounds {
            u0: (fit.ax_min(vx0), fit.ax_max(vx0)),
            u1: (f64::NEG_INFINITY, f64::INFINITY),
            ellipse: Some((fit.alpha, fit.beta)),
            half_planes: fit.a.iter().copied().zip(fit.b.iter().copied()).collect(),
        }
    }

    pub fn kinematic(fit: &EnvelopeFit, vx0: f64, steer_max: f64) -> Self {
        ControlBounds {
            u0: (fit.ax_min(vx0), fit.ax_max(vx0)),
            u1: (-steer_max, steer_max),
            ellipse: None,
            half_planes: Vec::new(),
        }
    }

    pub fn ellipse_ratio(&self, u: &ControlVec) -> f64 {
        match self.ellipse {
            Some((a, b)) => ((u[0] / a).powi(2) + (u[1] / b).powi(2)).sqrt(),
            None => 0.0,
        }
    }

    /// Largest violation of any bound (0 when admissible).
    pub fn violation(&self, u: &ControlVec) -> f64 {
        let mut v: f64 = 0.0;
        v = v.max(self.u0.0 - u[0]).max(u[0] - self.u0.1);
        v = v.max(self.u1.0 - u[1]).max(u[1] - self.u1.1);
        if self.ellipse.is_some() {
            v = v.max(self.ellipse_ratio(u) - 1.0);
        }
        for (n, b) in &self.half_planes {
            v = v.max(n[0] * u[0] + n[1] * u[1] - b);
        }
        v
    }

    /// Scales `u` toward the origin until it is admissible. The set is
    /// convex and contains the origin, so this always succeeds.
    pub fn pull_inside(&self, u: &ControlVec) -> ControlVec {
        let mut t: f64 = 1.0;
        let mut limit = |value: f64, bound: f64| {
            if value > bound && value > 0.0 {
                t = t.min(bound / value);
            }
        };
        limit(u[0], self.u0.1);
        limit(-u[0], -self.u0.0);
        limit(u[1], self.u1.1);
        limit(-u[1], -self.u1.0);
        for (n, b) in &self.half_planes {
            limit(n[0] * u[0] + n[1] * u[1], *b);
        }
        let r = self.ellipse_ratio(u);
        if r > 1.0 {
            t = t.min(1.0 / r);
        }
        u * t.max(0.0)
    }
}

/// One planning instance.
#[derive(Debug, Clone)]
pub struct MpcProblem {
    pub model: PlanModel,
    pub x0: StateVec,
    pub window: PathWindow,
    /// Reference speed (the window's `v_max`).
    pub v_ref: f64,
    pub bounds: ControlBounds,
    pub obstacles: Vec<ObstacleParabola>,
    pub config: MpcConfig,
}

/// Assembles a problem. The longitudinal box is evaluated at the initial
/// speed and kept for the whole horizon.
pub fn build_problem(
    model: PlanModel,
    xi0: &PlannerState,
    window: PathWindow,
    envelope: &EnvelopeFit,
    steer_max: f64,
    obstacles: Vec<ObstacleParabola>,
    config: MpcConfig,
) -> MpcProblem {
    let bounds = match model {
        PlanModel::Proposed { .. } => ControlBounds::from_envelope(envelope, xi0.vx),
        PlanModel::Kinematic { .. } => ControlBounds::kinematic(envelope, xi0.vx, steer_max),
    };
    MpcProblem {
        model,
        x0: xi0.to_vec(),
        v_ref: window.v_max,
        window,
        bounds,
        obstacles,
        config,
    }
}

/// Linearization of the problem at a control sequence.
pub struct Linearization {
    pub states: Vec<StateVec>,
    /// Least-squares residuals: speed, X, Y per step `1..=K`, then controls.
    pub residuals: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    /// `p_o` at the check points, see [`MpcProblem::obstacle_values`].
    pub obstacle_values: Vec<Vec<f64>>,
    /// Gradients of the obstacle values with respect to the controls.
    pub obstacle_gradients: Vec<Vec<Vec<f64>>>,
}

impl MpcProblem {
    pub fn steps(&self) -> usize {
        self.config.steps
    }

    pub fn n_controls(&self) -> usize {
        NU * self.steps()
    }

    pub fn rollout(&self, controls: &[ControlVec]) -> Vec<StateVec> {
        let mut out = Vec::with_capacity(controls.len() + 1);
        out.push(self.x0);
        for u in controls {
            let next = self.model.step(out.last().unwrap(), u, self.config.h);
            out.push(next);
        }
        out
    }

    fn tracking(&self, x: &StateVec) -> [f64; 3] {
        let c = &self.config;
        let ds = x[IS] - self.window.s0;
        [
            c.w_v.sqrt() * (x[IVX] - self.v_ref),
            c.w_x.sqrt() * (x[IX] - poly_eval(&self.window.px, ds).0),
            c.w_y.sqrt() * (x[IY] - poly_eval(&self.window.py, ds).0),
        ]
    }

    pub fn residuals(&self, states: &[StateVec], controls: &[ControlVec]) -> Vec<f64> {
        let mut r = Vec::with_capacity(3 * self.steps() + self.n_controls());
        for x in &states[1..] {
            r.extend(self.tracking(x));
        }
        let wu = self.config.w_u.sqrt();
        for u in controls {
            r.push(wu * u[0]);
            r.push(wu * u[1]);
        }
        r
    }

    pub fn obstacle_samples(&self) -> usize {
        self.config.obstacle_samples.max(1)
    }

    /// `p_o` at the check points, indexed `[o][k m + j]` for step `k` and
    /// check point `j < m`.
    pub fn obstacle_values(&self, states: &[StateVec]) -> Vec<Vec<f64>> {
        let m = self.obstacle_samples();
        self.obstacles
            .iter()
            .map(|o| {
                states
                    .windows(2)
                    .flat_map(|w| {
                        (1..=m).map(move |j| {
                            let f = j as f64 / m as f64;
                            let x = w[0] * (1.0 - f) + w[1] * f;
                            o.eval(x[IX], x[IY])
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Optimal obstacle slacks `O[o][k]` for the given check-point values.
    pub fn obstacle_slacks(&self, values: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = self.obstacle_samples();
        values
            .iter()
            .map(|row| row.chunks(m).map(|c| c.iter().fold(0.0, |a: f64, p| a.max(*p))).collect())
            .collect()
    }

    /// Objective with every slack at its optimal value for the given states.
    pub fn objective_of(&self, states: &[StateVec], controls: &[ControlVec]) -> f64 {
        let track: f64 = self.residuals(states, controls).iter().map(|r| r * r).sum();
        let obs: f64 = self
            .obstacle_slacks(&self.obstacle_values(states))
            .iter()
            .flatten()
            .map(|o| o * o)
            .sum();
        track + self.config.w_o * obs
    }

    pub fn objective(&self, controls: &[ControlVec]) -> f64 {
        self.objective_of(&self.rollout(controls), controls)
    }

    /// Residuals, their Jacobian and the obstacle sensitivities.
    pub fn linearize(&self, controls: &[ControlVec]) -> Linearization {
        let k_steps = self.steps();
        let nz = self.n_controls();
        let h = self.config.h;
        let states = self.rollout(controls);
        let residuals = self.residuals(&states, controls);
        let mut jac = DMatrix::zeros(residuals.len(), nz);
        let mut sens = DMatrix::<f64>::zeros(NX, nz);
        let c = &self.config;
        let (sv, sx, sy) = (c.w_v.sqrt(), c.w_x.sqrt(), c.w_y.sqrt());
        let m = self.obstacle_samples();
        let mut obstacle_gradients = vec![Vec::with_capacity(k_steps * m); self.obstacles.len()];
        for k in 0..k_steps {
            let prev = sens.clone();
            let (a, b) = self.model.step_jacobians(&states[k], &controls[k], h);
            let mut next = DMatrix::from_column_slice(NX, NX, a.as_slice()) * &sens;
            for j in 0..NU {
                for i in 0..NX {
                    next[(i, NU * k + j)] += b[(i, j)];
                }
            }
            sens = next;
            let x = &states[k + 1];
            let ds = x[IS] - self.window.s0;
            let dpx = poly_eval(&self.window.px, ds).1;
            let dpy = poly_eval(&self.window.py, ds).1;
            let row = 3 * k;
            for col in 0..nz {
                jac[(row, col)] = sv * sens[(IVX, col)];
                jac[(row + 1, col)] = sx * (sens[(IX, col)] - dpx * sens[(IS, col)]);
                jac[(row + 2, col)] = sy * (sens[(IY, col)] - dpy * sens[(IS, col)]);
            }
            for (o, obs) in self.obstacles.iter().enumerate() {
                for j in 1..=m {
                    let f = j as f64 / m as f64;
                    let z = states[k] * (1.0 - f) + x * f;
                    let (gx, gy) = obs.gradient(z[IX], z[IY]);
                    let d = |i: usize, col: usize| prev[(i, col)] * (1.0 - f) + sens[(i, col)] * f;
                    obstacle_gradients[o].push((0..nz).map(|col| gx * d(IX, col) + gy * d(IY, col)).collect());
                }
            }
        }
        let wu = c.w_u.sqrt();
        for col in 0..nz {
            jac[(3 * k_steps + col, col)] = wu;
        }
        Linearization {
            obstacle_values: self.obstacle_values(&states),
            states,
            residuals,
            jacobian: jac,
            obstacle_gradients,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Termination {
    IterationCap,
    KktTolerance,
    Stalled,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveStats {
    pub sqp_iterations: usize,
    pub qp_iterations: usize,
    pub kkt_residual: f64,
    pub wall_ms: f64,
    pub termination: Termination,
}

/// Slack values and summary of a solved plan.
#[derive(Debug, Clone)]
pub struct MpcSolution {
    pub model: PlanModel,
    pub h: f64,
    pub states: Vec<PlannerState>,
    pub controls: Vec<ControlVec>,
    /// Slacks for steps `1..=K`.
    pub v_tol: Vec<f64>,
    pub x_tol: Vec<f64>,
    pub y_tol: Vec<f64>,
    /// `[o][k - 1]`.
    pub o_tol: Vec<Vec<f64>>,
    pub objective: f64,
    pub stats: SolveStats,
    /// Set when the solver could not produce a trustworthy step.
    pub degraded: bool,
}

impl MpcSolution {
    pub fn from_controls(problem: &MpcProblem, controls: Vec<ControlVec>, stats: SolveStats, degraded: bool) -> Self {
        let states = problem.rollout(&controls);
        let mut v_tol = Vec::new();
        let mut x_tol = Vec::new();
        let mut y_tol = Vec::new();
        for x in &states[1..] {
            let ds = x[IS] - problem.window.s0;
            v_tol.push((x[IVX] - problem.v_ref).abs());
            x_tol.push((x[IX] - poly_eval(&problem.window.px, ds).0).abs());
            y_tol.push((x[IY] - poly_eval(&problem.window.py, ds).0).abs());
        }
        let o_tol = problem.obstacle_slacks(&problem.obstacle_values(&states));
        MpcSolution {
            model: problem.model,
            h: problem.config.h,
            objective: problem.objective_of(&states, &controls),
            states: states.iter().map(PlannerState::from_vec).collect(),
            controls,
            v_tol,
            x_tol,
            y_tol,
            o_tol,
            stats,
            degraded,
        }
    }

    pub fn plan_controls(&self) -> Vec<PlanControl> {
        self.controls.iter().map(|u| PlanControl::from_vec(&self.model, u)).collect()
    }

    /// Planned state at time `t` after the plan start, linearly interpolated.
    pub fn state_at(&self, t: f64) -> PlannerState {
        let n = self.states.len() - 1;
        let f = (t / self.h).clamp(0.0, n as f64);
        let i = (f.floor() as usize).min(n.saturating_sub(1));
        let w = f - i as f64;
        let a = self.states[i].to_vec();
        let b = self.states[(i + 1).min(n)].to_vec();
        PlannerState::from_vec(&(a + (b - a) * w))
    }

    /// Control active at time `t` after the plan start.
    pub fn control_at(&self, t: f64) -> ControlVec {
        let i = ((t / self.h).floor().max(0.0) as usize).min(self.controls.len() - 1);
        self.controls[i]
    }

    /// Planned path speed at time `t`.
    pub fn speed_at(&self, t: f64) -> f64 {
        let v = self.state_at(t).to_vec();
        self.model.speed(&v)
    }

    /// Largest discrepancy between consecutive states and an Euler step.
    pub fn dynamics_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, u) in self.controls.iter().enumerate() {
            let pred = self.model.step(&self.states[k].to_vec(), u, self.h);
            let diff = pred - self.states[k + 1].to_vec();
            worst = worst.max(diff.amax());
        }
        worst
    }
}

/// Controls of `previous` advanced by `shift` seconds, with the last control
/// repeated. Piecewise-constant controls are blended across step boundaries.
pub fn warm_start(previous: &MpcSolution, shift: f64, steps: usize) -> Vec<ControlVec> {
    let h = previous.h;
    let n = previous.controls.len();
    let at = |i: usize| previous.controls[i.min(n - 1)];
    let j = (shift / h).floor().max(0.0) as usize;
    let f = shift / h - j as f64;
    (0..steps).map(|k| at(k + j) * (1.0 - f) + at(k + j + 1) * f).collect()
}
