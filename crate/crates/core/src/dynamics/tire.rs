use super::params::AxleTire;

/// Speed below which slip denominators are clamped (m/s).
pub const SLIP_SPEED_EPS: f64 = 0.5;

/// Longitudinal slip ratio of a wheel.
///
/// Positive when the tread moves faster than the ground (traction), negative
/// under braking. Denominators are clamped at [`SLIP_SPEED_EPS`] and the result
/// is limited to [-1, 1].
pub fn slip_ratio(wheel_radius: f64, omega: f64, vx_wheel: f64) -> f64 {
    let tread = wheel_radius * omega;
    let ratio = if tread >= vx_wheel {
        (tread - vx_wheel) / tread.max(SLIP_SPEED_EPS)
    } else {
        (tread - vx_wheel) / vx_wheel.max(SLIP_SPEED_EPS)
    };
    ratio.clamp(-1.0, 1.0)
}

/// Wheel-frame tire forces `(F_xw, F_yw)` for combined slip.
///
/// Each channel follows its pure-slip Magic Formula curve; the combined vector
/// is then scaled back onto the friction ellipse with semi-axes
/// `mu F_z D_x` and `mu F_z D_y` whenever it falls outside.
pub fn tire_forces(slip_ratio: f64, slip_angle: f64, fz: f64, mu: f64, tire: &AxleTire) -> (f64, f64) {
    if fz <= 0.0 {
        return (0.0, 0.0);
    }
    let scale = mu * fz;
    let fx = scale * tire.longitudinal.eval(slip_ratio);
    let fy = scale * tire.lateral.eval(slip_angle);
    let nx = fx / (scale * tire.longitudinal.d);
    let ny = fy / (scale * tire.lateral.d);
    let e = nx * nx + ny * ny;
    if e > 1.0 {
        let k = 1.0 / e.sqrt();
        (fx * k, fy * k)
    } else {
        (fx, fy)
    }
}
