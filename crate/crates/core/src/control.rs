//! Low-level tracking of planned trajectories: a speed PID producing an
//! evenly split wheel torque and a look-ahead lateral PID producing a
//! rate-limited steering command.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, VehicleParams, VehicleState};
use crate::error::{Error, Result};
use crate::planner::Plan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Speed loop, output in m/s² per m/s.
    pub longitudinal: PidGains,
    /// Lateral loop, output in rad per m of look-ahead offset.
    pub lateral: PidGains,
    /// Look-ahead time (s).
    pub tau: f64,
    /// Steering command slew limit (rad/s).
    pub delta_rate_max: f64,
    /// Control period (s).
    pub period: f64,
    /// Plans older than this are not tracked (s).
    pub max_plan_age: f64,
    /// Feed the planned acceleration and curvature forward.
    pub feedforward: bool,
    /// Use `cos` for both look-ahead coordinates.
    pub literal_lookahead: bool,
    /// Integrator clamp for both loops.
    pub integral_limit: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            longitudinal: PidGains {
                kp: 1.5,
                ki: 0.3,
                kd: 0.0,
            },
            lateral: PidGains {
                kp: 1.0,
                ki: 0.02,
                kd: 0.15,
            },
            tau: 0.2,
            delta_rate_max: 12.0,
            period: 0.01,
            max_plan_age: 0.2,
            feedforward: true,
            literal_lookahead: false,
            integral_limit: 5.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let gains = [self.longitudinal, self.lateral];
        if gains.iter().any(|g| g.kp < 0.0 || g.ki < 0.0 || g.kd < 0.0) {
            return Err(Error::InvalidParameter("controller gains must be nonnegative".into()));
        }
        if !(self.tau > 0.0 && self.period > 0.0 && self.delta_rate_max > 0.0 && self.max_plan_age > 0.0) {
            return Err(Error::InvalidParameter("tau, period, delta_rate_max and max_plan_age must be positive".into()));
        }
        Ok(())
    }
}

/// Predicted pose after `tau` seconds: `(X, Y, psi)`.
pub fn lookahead_pose(state: &VehicleState, tau: f64) -> (f64, f64, f64) {
    let psi = state.yaw + 0.5 * tau * state.yaw_rate;
    (
        state.x + tau * state.vx * psi.cos(),
        state.y + tau * state.vx * psi.sin(),
        psi,
    )
}

/// Look-ahead pose as printed in the original formulation, with `cos` in
/// both coordinates.
pub fn lookahead_pose_literal(state: &VehicleState, tau: f64) -> (f64, f64, f64) {
    let psi = state.yaw + 0.5 * tau * state.yaw_rate;
    (
        state.x + tau * state.vx * psi.cos(),
        state.y + tau * state.vx * psi.cos(),
        psi,
    )
}

#[derive(Debug, Clone, Copy, Default)]
struct Pid {
    integral: f64,
    previous: Option<f64>,
}

impl Pid {
    fn update(&mut self, gains: &PidGains, error: f64, dt: f64, limit: f64) -> f64 {
        self.integral = (self.integral + error * dt).clamp(-limit, limit);
        let derivative = self.previous.map_or(0.0, |p| (error - p) / dt);
        self.previous = Some(error);
        gains.kp * error + gains.ki * self.integral + gains.kd * derivative
    }
}

/// One control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub input: ControlInput,
    /// Speed tracked at this tick: the planned speed capped at the window's
    /// speed limit (m/s).
    pub target_speed: f64,
    /// Signed look-ahead offset, positive when the plan lies to the left (m).
    pub lateral_error: f64,
    /// No usable plan; the previous command was held.
    pub stale: bool,
}

/// Stateful tracking controller, one per vehicle.
#[derive(Debug, Clone)]
pub struct Controller {
    pub config: ControllerConfig,
    params: VehicleParams,
    speed_pid: Pid,
    lateral_pid: Pid,
    last: ControlInput,
    initialized: bool,
}

impl Controller {
    pub fn new(config: ControllerConfig, params: VehicleParams) -> Self {
        Controller {
            config,
            params,
            speed_pid: Pid::default(),
            lateral_pid: Pid::default(),
            last: ControlInput::default(),
            initialized: false,
        }
    }

    pub fn last_command(&self) -> ControlInput {
        self.last
    }

    /// Computes the command at time `t`. Without a plan no older than
    /// `max_plan_age` the previous command is held.
    pub fn track(&mut self, t: f64, state: &VehicleState, plan: Option<&Plan>) -> ControlOutput {
        if !self.initialized {
            self.last.steer_cmd = state.steer;
            self.initialized = true;
        }
        let plan = match plan {
            Some(p) if t - p.t0 <= self.config.max_plan_age + 1e-9 => p,
            _ => {
                return ControlOutput {
                    input: self.last,
                    target_speed: f64::NAN,
                    lateral_error: f64::NAN,
                    stale: true,
                }
            }
        };
        let c = self.config;
        let p = &self.params;
        let dt = c.period;
        let age = (t - plan.t0).max(0.0);
        let sol = &plan.solution;

        let planned_speed = sol.state_at(age).vx;
        let target_speed = planned_speed.min(plan.window.v_max);
        let mut accel = self
            .speed_pid
            .update(&c.longitudinal, target_speed - state.vx, dt, c.integral_limit);
        if c.feedforward && planned_speed <= plan.window.v_max {
            accel += sol.control_at(age)[0];
        }
        let force = p.mass * accel + p.drag_coeff * state.vx * state.vx.abs();
        let total = (force * p.wheel_radius).clamp(4.0 * p.torque_min, 4.0 * p.torque_max);

        let (xh, yh, psih) = if c.literal_lookahead {
            lookahead_pose_literal(state, c.tau)
        } else {
            lookahead_pose(state, c.tau)
        };
        let ahead = sol.state_at(age + c.tau);
        let lateral_error = -(ahead.x - xh) * psih.sin() + (ahead.y - yh) * psih.cos();
        let mut steer = self.lateral_pid.update(&c.lateral, lateral_error, dt, c.integral_limit);
        if c.feedforward {
            let probe = 0.05;
            let rate = (sol.state_at(age + c.tau + probe).psi - ahead.psi) / probe;
            let curvature = rate / sol.speed_at(age + c.tau).max(1.0);
            steer += (p.wheelbase() * curvature).atan();
        }
        let max_change = c.delta_rate_max * dt;
        let steer_cmd = steer
            .clamp(self.last.steer_cmd - max_change, self.last.steer_cmd + max_change)
            .clamp(-p.steer_max, p.steer_max);

        self.last = ControlInput::even(total, steer_cmd);
        ControlOutput {
            input: self.last,
            target_speed,
            lateral_error,
            stale: false,
        }
    }
}
