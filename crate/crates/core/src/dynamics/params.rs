use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_toml, Error, Result};

/// One Magic Formula channel: `D sin(C atan(B s - E (B s - atan(B s))))`.
///
/// `d` is the peak factor relative to `mu * F_z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagicFormula {
    pub b: f64,
    pub c: f64,
    pub d: f64,
    #[serde(default)]
    pub e: f64,
}

impl MagicFormula {
    /// Normalized force for a given slip (multiply by `mu * F_z`).
    pub fn eval(&self, slip: f64) -> f64 {
        let bs = self.b * slip;
        self.d * (self.c * (bs - self.e * (bs - bs.atan())).atan()).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxleTire {
    pub longitudinal: MagicFormula,
    pub lateral: MagicFormula,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TireParams {
    pub front: AxleTire,
    pub rear: AxleTire,
}

impl TireParams {
    pub fn axle(&self, wheel: usize) -> &AxleTire {
        if wheel < 2 {
            &self.front
        } else {
            &self.rear
        }
    }
}

/// Physical constants of the simulated vehicle.
///
/// Wheel indices: 0 = front-left, 1 = front-right, 2 = rear-left,
/// 3 = rear-right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Total mass (kg).
    pub mass: f64,
    /// Roll, pitch and yaw inertia (kg m²).
    pub inertia_roll: f64,
    pub inertia_pitch: f64,
    pub inertia_yaw: f64,
    /// Spin inertia of one wheel (kg m²).
    pub wheel_inertia: f64,
    /// CoM to front / rear axle (m).
    pub lf: f64,
    pub lr: f64,
    /// Half track (m).
    pub half_track: f64,
    /// Half of the body width, used for obstacle clearance margins (m).
    pub half_width: f64,
    pub wheel_radius: f64,
    /// Suspension stiffness (N/m) and damping (N s/m), per corner.
    pub suspension_stiffness: f64,
    pub suspension_damping: f64,
    /// CoM height, the moment arm of the roll and pitch equations (m).
    pub cg_height: f64,
    /// Road friction coefficient.
    pub mu: f64,
    /// Lumped aerodynamic coefficient: `F_aero = drag_coeff * vx²` (kg/m).
    pub drag_coeff: f64,
    /// Steering actuator: rate limit (rad/s), bandwidth (1/s), angle limit (rad).
    pub steer_rate_max: f64,
    pub steer_bandwidth: f64,
    pub steer_max: f64,
    /// Per-wheel torque bounds (N m). Negative torque acts as a brake.
    pub torque_min: f64,
    pub torque_max: f64,
    /// Wheel speed below which brake torque fades out (rad/s).
    pub brake_fade_speed: f64,
    pub tire: TireParams,
}

impl VehicleParams {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let params: VehicleParams = read_toml(path.as_ref())?;
        params.validate()?;
        Ok(params)
    }

    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    /// Normal load of each wheel with the body level and at rest.
    pub fn static_loads(&self) -> [f64; 4] {
        let w = self.mass * crate::GRAVITY / (2.0 * self.wheelbase());
        let front = w * self.lr;
        let rear = w * self.lf;
        [front, front, rear, rear]
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("inertia_roll", self.inertia_roll),
            ("inertia_pitch", self.inertia_pitch),
            ("inertia_yaw", self.inertia_yaw),
            ("wheel_inertia", self.wheel_inertia),
            ("lf", self.lf),
            ("lr", self.lr),
            ("half_track", self.half_track),
            ("half_width", self.half_width),
            ("wheel_radius", self.wheel_radius),
            ("suspension_stiffness", self.suspension_stiffness),
            ("cg_height", self.cg_height),
            ("steer_rate_max", self.steer_rate_max),
            ("steer_bandwidth", self.steer_bandwidth),
            ("steer_max", self.steer_max),
            ("brake_fade_speed", self.brake_fade_speed),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.mu > 0.0 && self.mu <= 1.5) {
            return Err(Error::InvalidParameter(format!("mu must lie in (0, 1.5], got {}", self.mu)));
        }
        if self.suspension_damping < 0.0 || self.drag_coeff < 0.0 {
            return Err(Error::InvalidParameter("damping and drag must be non-negative".into()));
        }
        if !(self.torque_min < 0.0 && self.torque_max > 0.0) {
            return Err(Error::InvalidParameter("torque bounds must straddle zero".into()));
        }
        for axle in [&self.tire.front, &self.tire.rear] {
            for mf in [&axle.longitudinal, &axle.lateral] {
                if !(mf.d > 0.5 && mf.d < 2.0) {
                    return Err(Error::InvalidParameter(format!("peak factor {} outside (0.5, 2.0)", mf.d)));
                }
                if !(mf.b > 0.0 && mf.c > 0.0) {
                    return Err(Error::InvalidParameter("stiffness and shape factors must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_file_loads() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/vehicle.toml");
        let p = VehicleParams::from_file(path).unwrap();
        let total: f64 = p.static_loads().iter().sum();
        assert!((total - p.mass * crate::GRAVITY).abs() < 1e-9);
    }

    #[test]
    fn rejects_out_of_range_friction() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/vehicle.toml");
        let mut p = VehicleParams::from_file(path).unwrap();
        p.mu = 1.6;
        assert!(p.validate().is_err());
        p.mu = 1.0;
        p.lf = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn magic_formula_is_odd_and_bounded() {
        let mf = MagicFormula { b: 10.0, c: 1.4, d: 1.0, e: -0.3 };
        for i in -100..=100 {
            let s = i as f64 * 0.02;
            assert!((mf.eval(s) + mf.eval(-s)).abs() < 1e-12);
            assert!(mf.eval(s).abs() <= 1.0 + 1e-12);
        }
    }
}
