use serde::{Deserialize, Serialize};

use super::params::VehicleParams;
use super::tire::{slip_ratio, tire_forces, SLIP_SPEED_EPS};
use crate::error::{Error, Result};

/// Largest accepted integration step (s).
pub const MAX_STEP: f64 = 0.002;

/// Full simulator state. Velocities are expressed in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub roll: f64,
    pub pitch: f64,
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    pub roll_rate: f64,
    pub pitch_rate: f64,
    /// FL, FR, RL, RR (rad/s).
    pub wheel_speed: [f64; 4],
    /// Front steering angle (rad).
    pub steer: f64,
}

pub const STATE_DIM: usize = 15;

impl VehicleState {
    /// Level body moving at `(vx, vy)` with free-rolling wheels.
    pub fn rolling(x: f64, y: f64, yaw: f64, vx: f64, vy: f64, params: &VehicleParams) -> Self {
        let mut s = VehicleState {
            x,
            y,
            yaw,
            vx,
            vy,
            ..Default::default()
        };
        for i in 0..4 {
            s.wheel_speed[i] = contact_velocity(&s, params, i).0 / params.wheel_radius;
        }
        s
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        let w = self.wheel_speed;
        [
            self.x,
            self.y,
            self.yaw,
            self.roll,
            self.pitch,
            self.vx,
            self.vy,
            self.yaw_rate,
            self.roll_rate,
            self.pitch_rate,
            w[0],
            w[1],
            w[2],
            w[3],
            self.steer,
        ]
    }

    pub fn from_array(a: &[f64; STATE_DIM]) -> Self {
        VehicleState {
            x: a[0],
            y: a[1],
            yaw: a[2],
            roll: a[3],
            pitch: a[4],
            vx: a[5],
            vy: a[6],
            yaw_rate: a[7],
            roll_rate: a[8],
            pitch_rate: a[9],
            wheel_speed: [a[10], a[11], a[12], a[13]],
            steer: a[14],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Reflection about the body's initial x axis (left and right swapped).
    pub fn mirrored(&self) -> Self {
        let w = self.wheel_speed;
        VehicleState {
            y: -self.y,
            yaw: -self.yaw,
            roll: -self.roll,
            vy: -self.vy,
            yaw_rate: -self.yaw_rate,
            roll_rate: -self.roll_rate,
            wheel_speed: [w[1], w[0], w[3], w[2]],
            steer: -self.steer,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Wheel torques (N m), FL, FR, RL, RR.
    pub torque: [f64; 4],
    /// Commanded front steering angle (rad).
    pub steer_cmd: f64,
}

impl ControlInput {
    pub fn even(total_torque: f64, steer_cmd: f64) -> Self {
        ControlInput {
            torque: [total_torque / 4.0; 4],
            steer_cmd,
        }
    }

    pub fn mirrored(&self) -> Self {
        let t = self.torque;
        ControlInput {
            torque: [t[1], t[0], t[3], t[2]],
            steer_cmd: -self.steer_cmd,
        }
    }
}

/// Per-wheel tire quantities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TireState {
    pub slip_ratio: f64,
    pub slip_angle: f64,
    /// Wheel-frame forces (N).
    pub fx_wheel: f64,
    pub fy_wheel: f64,
    /// Body-frame forces (N).
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    /// Longitudinal speed of the contact point in the wheel frame (m/s).
    pub vx_wheel: f64,
}

fn is_left(wheel: usize) -> bool {
    wheel % 2 == 0
}

fn is_front(wheel: usize) -> bool {
    wheel < 2
}

/// Body-frame velocity of a wheel contact point.
fn contact_velocity(s: &VehicleState, p: &VehicleParams, wheel: usize) -> (f64, f64) {
    let lateral = if is_left(wheel) { p.half_track } else { -p.half_track };
    let longitudinal = if is_front(wheel) { p.lf } else { -p.lr };
    (s.vx - lateral * s.yaw_rate, s.vy + longitudinal * s.yaw_rate)
}

/// Side-slip angle of each tire (rad), small-angle form.
pub fn slip_angles(s: &VehicleState, p: &VehicleParams) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (i, a) in out.iter_mut().enumerate() {
        let (vx, vy) = contact_velocity(s, p, i);
        let ratio = vy / vx.max(SLIP_SPEED_EPS);
        *a = if is_front(i) { s.steer - ratio } else { -ratio };
    }
    out
}

/// Normal loads with roll/pitch load transfer, clamped at zero on lift-off.
///
/// Body height is held fixed, so the mean pitch deflection is taken up by
/// heave and the total load stays at the static weight.
pub fn normal_loads(s: &VehicleState, p: &VehicleParams) -> [f64; 4] {
    let base = p.static_loads();
    let half_base = 0.5 * (p.lf + p.lr);
    let mut out = [0.0; 4];
    for (i, fz) in out.iter_mut().enumerate() {
        let side = if is_left(i) { p.half_track } else { -p.half_track };
        let arm = if is_front(i) { -half_base } else { half_base };
        let deflection = arm * s.pitch + side * s.roll;
        let deflection_rate = arm * s.pitch_rate + side * s.roll_rate;
        *fz = (base[i] - p.suspension_stiffness * deflection - p.suspension_damping * deflection_rate).max(0.0);
    }
    out
}

/// Tire forces of all four wheels at the given state.
pub fn tire_states(s: &VehicleState, p: &VehicleParams) -> [TireState; 4] {
    let loads = normal_loads(s, p);
    let alphas = slip_angles(s, p);
    let mut out = [TireState::default(); 4];
    for i in 0..4 {
        let steer = if is_front(i) { s.steer } else { 0.0 };
        let (sin_d, cos_d) = steer.sin_cos();
        let (vx, vy) = contact_velocity(s, p, i);
        let vx_wheel = vx * cos_d + vy * sin_d;
        let tau = slip_ratio(p.wheel_radius, s.wheel_speed[i], vx_wheel);
        let (fxw, fyw) = tire_forces(tau, alphas[i], loads[i], p.mu, p.tire.axle(i));
        out[i] = TireState {
            slip_ratio: tau,
            slip_angle: alphas[i],
            fx_wheel: fxw,
            fy_wheel: fyw,
            fx: fxw * cos_d - fyw * sin_d,
            fy: fxw * sin_d + fyw * cos_d,
            fz: loads[i],
            vx_wheel,
        };
    }
    out
}

/// Torque actually transmitted to the wheel. Brake torque opposes rotation
/// and fades out as the wheel stops, so a locked wheel never spins backwards.
fn effective_torque(torque: f64, omega: f64, p: &VehicleParams) -> f64 {
    if torque < 0.0 {
        torque * (omega / p.brake_fade_speed).tanh()
    } else {
        torque
    }
}

/// Body-frame accelerations `(a_x, a_y, yaw acceleration)` of the CoM.
pub fn body_accelerations(s: &VehicleState, p: &VehicleParams) -> (f64, f64, f64) {
    let d = derivative_with_tires(s, &ControlInput::default(), p, &tire_states(s, p));
    (d.vx - s.yaw_rate * s.vy, d.vy + s.yaw_rate * s.vx, d.yaw_rate)
}

/// Time derivative of the full state.
pub fn state_derivative(s: &VehicleState, u: &ControlInput, p: &VehicleParams) -> VehicleState {
    derivative_with_tires(s, u, p, &tire_states(s, p))
}

fn derivative_with_tires(s: &VehicleState, u: &ControlInput, p: &VehicleParams, t: &[TireState; 4]) -> VehicleState {
    let sum_fx: f64 = t.iter().map(|w| w.fx).sum();
    let sum_fy: f64 = t.iter().map(|w| w.fy).sum();
    let aero = p.drag_coeff * s.vx * s.vx.abs();

    let (sin_y, cos_y) = s.yaw.sin_cos();
    let yaw_moment =
        p.lf * (t[0].fy + t[1].fy) - p.lr * (t[2].fy + t[3].fy) + p.half_track * (t[1].fx + t[3].fx - t[0].fx - t[2].fx);
    let roll_moment = p.half_track * (t[0].fz + t[2].fz - t[1].fz - t[3].fz) + p.cg_height * sum_fy;
    let pitch_moment = p.lr * (t[2].fz + t[3].fz) - p.lf * (t[0].fz + t[1].fz) - p.cg_height * sum_fx;

    let mut wheel_acc = [0.0; 4];
    for i in 0..4 {
        let torque = effective_torque(u.torque[i], s.wheel_speed[i], p);
        wheel_acc[i] = (torque - p.wheel_radius * t[i].fx_wheel) / p.wheel_inertia;
    }

    let cmd = u.steer_cmd.clamp(-p.steer_max, p.steer_max);
    let steer_rate = (p.steer_bandwidth * (cmd - s.steer)).clamp(-p.steer_rate_max, p.steer_rate_max);

    VehicleState {
        x: s.vx * cos_y - s.vy * sin_y,
        y: s.vx * sin_y + s.vy * cos_y,
        yaw: s.yaw_rate,
        roll: s.roll_rate,
        pitch: s.pitch_rate,
        vx: s.yaw_rate * s.vy + (sum_fx - aero) / p.mass,
        vy: -s.yaw_rate * s.vx + sum_fy / p.mass,
        yaw_rate: yaw_moment / p.inertia_yaw,
        roll_rate: roll_moment / p.inertia_roll,
        pitch_rate: pitch_moment / p.inertia_pitch,
        wheel_speed: wheel_acc,
        steer: steer_rate,
    }
}

fn axpy(a: &[f64; STATE_DIM], k: f64, d: &[f64; STATE_DIM]) -> [f64; STATE_DIM] {
    let mut out = *a;
    for (o, v) in out.iter_mut().zip(d) {
        *o += k * v;
    }
    out
}

/// Advances the state by `dt` with classical fourth-order Runge-Kutta.
pub fn step(s: &VehicleState, u: &ControlInput, p: &VehicleParams, dt: f64) -> Result<VehicleState> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(Error::InvalidTimeStep(dt));
    }
    let f = |a: &[f64; STATE_DIM]| state_derivative(&VehicleState::from_array(a), u, p).to_array();
    let x0 = s.to_array();
    let k1 = f(&x0);
    let k2 = f(&axpy(&x0, 0.5 * dt, &k1));
    let k3 = f(&axpy(&x0, 0.5 * dt, &k2));
    let k4 = f(&axpy(&x0, dt, &k3));
    let mut out = x0;
    for i in 0..STATE_DIM {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(VehicleState::from_array(&out))
}

/// Integrates over `duration` with constant input using steps of at most `dt`.
pub fn simulate(s: &VehicleState, u: &ControlInput, p: &VehicleParams, dt: f64, duration: f64) -> Result<VehicleState> {
    let n = (duration / dt).round() as usize;
    let mut state = *s;
    for _ in 0..n {
        state = step(&state, u, p, dt)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> VehicleParams {
        VehicleParams::from_file(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/vehicle.toml")).unwrap()
    }

    #[test]
    fn straight_rolling_has_zero_slip_angles() {
        let p = params();
        let s = VehicleState::rolling(0.0, 0.0, 0.0, 20.0, 0.0, &p);
        assert_eq!(slip_angles(&s, &p), [0.0; 4]);
    }

    #[test]
    fn front_slip_angle_direct_evaluation() {
        let p = params();
        let s = VehicleState {
            vx: 20.0,
            vy: 1.0,
            steer: 0.05,
            ..Default::default()
        };
        let a = slip_angles(&s, &p);
        assert!(a[0].abs() < 1e-15 && a[1].abs() < 1e-15);
        assert!((a[2] + 0.05).abs() < 1e-15);
    }

    #[test]
    fn slip_angles_mirror() {
        let p = params();
        let s = VehicleState {
            vx: 18.0,
            vy: 0.7,
            yaw_rate: 0.3,
            steer: 0.04,
            ..Default::default()
        };
        let a = slip_angles(&s, &p);
        let m = slip_angles(&s.mirrored(), &p);
        for (i, j) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
            assert!((a[i] + m[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn static_loads_sum_to_weight() {
        let p = params();
        let loads = normal_loads(&VehicleState::default(), &p);
        assert!((loads.iter().sum::<f64>() - p.mass * crate::GRAVITY).abs() < 1e-9);
        assert_eq!(loads, p.static_loads());
    }

    #[test]
    fn roll_transfers_load_to_the_right() {
        let p = params();
        let theta = 0.02;
        let s = VehicleState { roll: theta, ..Default::default() };
        let f = normal_loads(&s, &p);
        let d = 2.0 * p.suspension_stiffness * p.half_track * theta;
        assert!((f[1] - f[0] - d).abs() < 1e-9);
        assert!((f[3] - f[2] - d).abs() < 1e-9);
        assert!((f.iter().sum::<f64>() - p.mass * crate::GRAVITY).abs() < 1e-9);
    }

    #[test]
    fn pitch_loads_the_front() {
        let p = params();
        let s = VehicleState { pitch: 0.01, ..Default::default() };
        let f = normal_loads(&s, &p);
        let base = p.static_loads();
        assert!(f[0] + f[1] > base[0] + base[1]);
        let d = 0.5 * p.suspension_stiffness * (p.lf + p.lr) * 0.01;
        assert!((f[0] - base[0] - d).abs() < 1e-9);
        assert!((f.iter().sum::<f64>() - p.mass * crate::GRAVITY).abs() < 1e-9);
    }

    #[test]
    fn lift_off_clamps_to_zero() {
        let p = params();
        let s = VehicleState { roll: 0.3, ..Default::default() };
        let f = normal_loads(&s, &p);
        assert_eq!(f[0], 0.0);
        assert!(f.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn straight_line_symmetry() {
        let p = params();
        let s = VehicleState::rolling(0.0, 0.0, 0.0, 15.0, 0.0, &p);
        let u = ControlInput::even(800.0, 0.0);
        let d = state_derivative(&s, &u, &p);
        assert_eq!(d.y, 0.0);
        assert_eq!(d.yaw_rate, 0.0);
        assert_eq!(d.roll_rate, 0.0);
        assert!(d.wheel_speed.iter().all(|&w| w > 0.0));
        let out = simulate(&s, &u, &p, 0.001, 0.3).unwrap();
        assert!(out.vx > 15.0);
        assert!(out.y.abs() < 1e-12);
        assert!(out.yaw.abs() < 1e-12);
    }

    #[test]
    fn position_rotation() {
        let p = params();
        let s = VehicleState {
            yaw: std::f64::consts::FRAC_PI_2,
            vx: 5.0,
            vy: 1.0,
            ..Default::default()
        };
        let d = state_derivative(&s, &ControlInput::default(), &p);
        assert!((d.x + 1.0).abs() < 1e-12);
        assert!((d.y - 5.0).abs() < 1e-12);
    }

    #[test]
    fn steering_is_rate_limited() {
        let p = params();
        let s = VehicleState::rolling(0.0, 0.0, 0.0, 10.0, 0.0, &p);
        let d = state_derivative(&s, &ControlInput::even(0.0, 0.4), &p);
        assert_eq!(d.steer, p.steer_rate_max);
        let d = state_derivative(&s, &ControlInput::even(0.0, 0.01), &p);
        assert!((d.steer - p.steer_bandwidth * 0.01).abs() < 1e-12);
    }

    #[test]
    fn step_rejects_bad_dt() {
        let p = params();
        let s = VehicleState::default();
        let u = ControlInput::default();
        assert!(matches!(step(&s, &u, &p, 0.0), Err(Error::InvalidTimeStep(_))));
        assert!(matches!(step(&s, &u, &p, 0.0025), Err(Error::InvalidTimeStep(_))));
        assert!(step(&s, &u, &p, 0.002).is_ok());
    }

    #[test]
    fn rest_is_an_equilibrium() {
        let p = params();
        let s = VehicleState::default();
        let out = simulate(&s, &ControlInput::default(), &p, 0.001, 1.0).unwrap();
        for (a, b) in out.to_array().iter().zip(s.to_array()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn braking_never_spins_wheels_backwards() {
        let p = params();
        let s = VehicleState::rolling(0.0, 0.0, 0.0, 10.0, 0.0, &p);
        let u = ControlInput::even(4.0 * p.torque_min, 0.0);
        let mut state = s;
        for _ in 0..600 {
            state = step(&state, &u, &p, 0.001).unwrap();
            assert!(state.wheel_speed.iter().all(|&w| w > -0.05), "{:?}", state.wheel_speed);
        }
        // near-locked wheels slide at the sliding friction level
        assert!(tire_states(&state, &p).iter().all(|t| t.slip_ratio < -0.8), "{:?}", state.wheel_speed);
        assert!(state.vx < 10.0 - 0.6 * 5.0 && state.vx > 10.0 - 0.6 * 10.5, "{}", state.vx);
    }
}
