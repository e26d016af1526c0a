use nalgebra::{SMatrix, SVector};

/// Planner state dimension: `[X, Y, psi, v_x, v_y, v_psi, s]`.
pub const NX: usize = 7;
/// Free controls per step.
pub const NU: usize = 2;

pub type StateVec = SVector<f64, NX>;
pub type ControlVec = SVector<f64, NU>;
pub type StateJac = SMatrix<f64, NX, NX>;
pub type ControlJac = SMatrix<f64, NX, NU>;

pub const IX: usize = 0;
pub const IY: usize = 1;
pub const IPSI: usize = 2;
pub const IVX: usize = 3;
pub const IVY: usize = 4;
pub const IVPSI: usize = 5;
pub const IS: usize = 6;

/// Prediction model used by the planner.
///
/// The proposed model uses controls `(u_x, u_y)` with `u_psi = gamma u_y`.
/// The kinematic model uses `(a, delta)`; its speed lives in the `v_x` slot
/// and the `v_y`, `v_psi` slots stay zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanModel {
    Proposed { gamma: f64 },
    Kinematic { lf: f64, lr: f64 },
}

fn speed_and_gradient(vx: f64, vy: f64) -> (f64, f64, f64) {
    let v = vx.hypot(vy);
    if v > 1e-9 {
        (v, vx / v, vy / v)
    } else {
        (0.0, 1.0, 0.0)
    }
}

/// Constrained double integrator with the arc-length state appended.
pub fn f_2di(x: &StateVec, ux: f64, uy: f64, upsi: f64) -> StateVec {
    let (s, c) = x[IPSI].sin_cos();
    let (v, _, _) = speed_and_gradient(x[IVX], x[IVY]);
    StateVec::from([
        x[IVX] * c - x[IVY] * s,
        x[IVX] * s + x[IVY] * c,
        x[IVPSI],
        ux,
        uy,
        upsi,
        v,
    ])
}

/// Kinematic bicycle. Returns the derivative in the shared state layout.
pub fn f_bicycle(x: &StateVec, a: f64, delta: f64, lf: f64, lr: f64) -> StateVec {
    let beta = lr / (lf + lr) * delta.tan();
    let slip = beta.atan();
    let v = x[IVX];
    let heading = x[IPSI] + slip;
    StateVec::from([
        v * heading.cos(),
        v * heading.sin(),
        v / lr * slip.sin(),
        a,
        0.0,
        0.0,
        v.abs(),
    ])
}

impl PlanModel {
    pub fn derivative(&self, x: &StateVec, u: &ControlVec) -> StateVec {
        match *self {
            PlanModel::Proposed { gamma } => f_2di(x, u[0], u[1], gamma * u[1]),
            PlanModel::Kinematic { lf, lr } => f_bicycle(x, u[0], u[1], lf, lr),
        }
    }

    /// Explicit Euler step.
    pub fn step(&self, x: &StateVec, u: &ControlVec, h: f64) -> StateVec {
        x + h * self.derivative(x, u)
    }

    /// Jacobians of [`PlanModel::step`] with respect to state and control.
    pub fn step_jacobians(&self, x: &StateVec, u: &ControlVec, h: f64) -> (StateJac, ControlJac) {
        let mut fa = StateJac::zeros();
        let mut fb = ControlJac::zeros();
        match *self {
            PlanModel::Proposed { gamma } => {
                let (s, c) = x[IPSI].sin_cos();
                let (vx, vy) = (x[IVX], x[IVY]);
                fa[(IX, IPSI)] = -vx * s - vy * c;
                fa[(IX, IVX)] = c;
                fa[(IX, IVY)] = -s;
                fa[(IY, IPSI)] = vx * c - vy * s;
                fa[(IY, IVX)] = s;
                fa[(IY, IVY)] = c;
                fa[(IPSI, IVPSI)] = 1.0;
                let (_, dvx, dvy) = speed_and_gradient(vx, vy);
                fa[(IS, IVX)] = dvx;
                fa[(IS, IVY)] = dvy;
                fb[(IVX, 0)] = 1.0;
                fb[(IVY, 1)] = 1.0;
                fb[(IVPSI, 1)] = gamma;
            }
            PlanModel::Kinematic { lf, lr } => {
                let k = lr / (lf + lr);
                let delta = u[1];
                let beta = k * delta.tan();
                let slip = beta.atan();
                let dslip = k / (delta.cos().powi(2) * (1.0 + beta * beta));
                let v = x[IVX];
                let heading = x[IPSI] + slip;
                let (sh, ch) = heading.sin_cos();
                fa[(IX, IPSI)] = -v * sh;
                fa[(IX, IVX)] = ch;
                fa[(IY, IPSI)] = v * ch;
                fa[(IY, IVX)] = sh;
                fa[(IPSI, IVX)] = slip.sin() / lr;
                fa[(IS, IVX)] = if v >= 0.0 { 1.0 } else { -1.0 };
                fb[(IX, 1)] = -v * sh * dslip;
                fb[(IY, 1)] = v * ch * dslip;
                fb[(IPSI, 1)] = v / lr * slip.cos() * dslip;
                fb[(IVX, 0)] = 1.0;
            }
        }
        (StateJac::identity() + h * fa, h * fb)
    }

    /// Longitudinal acceleration commanded by a control.
    pub fn longitudinal_accel(&self, u: &ControlVec) -> f64 {
        u[0]
    }

    /// Path speed `sqrt(v_x² + v_y²)` of a state.
    pub fn speed(&self, x: &StateVec) -> f64 {
        match self {
            PlanModel::Proposed { .. } => x[IVX].hypot(x[IVY]),
            PlanModel::Kinematic { .. } => x[IVX].abs(),
        }
    }
}
