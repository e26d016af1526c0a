use serde::{Deserialize, Serialize};

use super::path::RefPath;
use crate::error::{Error, Result};

/// Extra clearance beyond the vehicle half width (m).
pub const CLEARANCE: f64 = 0.3;
/// Look-behind and look-ahead slack of the relevance window (m).
pub const RELEVANCE_BEHIND: f64 = 5.0;
pub const RELEVANCE_AHEAD: f64 = 20.0;
/// Obstacles farther than this from the path are ignored (m).
pub const RELEVANCE_OFFSET: f64 = 6.0;

/// Smallest margin for which the parabola still covers the disc.
pub fn min_margin(radius: f64) -> f64 {
    (2.0 / 3f64.sqrt() - 1.0) * radius * 1.01
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassSide {
    Left,
    Right,
}

/// Static circular obstacle placed relative to the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    /// Arc length of the obstacle centre (m).
    pub s: f64,
    /// Lateral offset of the centre, positive to the left (m).
    #[serde(default)]
    pub offset: f64,
    pub radius: f64,
    /// Forced pass side; by default the side away from the centre offset.
    #[serde(default)]
    pub side: Option<PassSide>,
}

/// Obstacle resolved to world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub s: f64,
    pub offset: f64,
    pub center: (f64, f64),
    pub radius: f64,
    pub side: PassSide,
    /// Unit normal of the path at the obstacle, pointing to the pass side.
    pub pass_normal: (f64, f64),
}

impl Obstacle {
    pub fn place(path: &RefPath, spec: &ObstacleSpec) -> Result<Self> {
        if !(spec.radius > 0.0) {
            return Err(Error::InvalidParameter(format!("obstacle radius must be positive, got {}", spec.radius)));
        }
        let p = path.point_at(spec.s);
        let (sh, ch) = p.heading.sin_cos();
        let left = (-sh, ch);
        let side = spec
            .side
            .unwrap_or(if spec.offset > 0.0 { PassSide::Right } else { PassSide::Left });
        let pass_normal = match side {
            PassSide::Left => left,
            PassSide::Right => (-left.0, -left.1),
        };
        Ok(Obstacle {
            s: spec.s,
            offset: spec.offset,
            center: (p.x + spec.offset * left.0, p.y + spec.offset * left.1),
            radius: spec.radius,
            side,
            pass_normal,
        })
    }

    /// Parabola with the default clearance for a body of the given half width.
    pub fn parabola(&self, half_width: f64) -> ObstacleParabola {
        build_parabola(self.center, self.radius, half_width + CLEARANCE, self.pass_normal)
    }

    /// Distance from `(x, y)` to the obstacle edge (negative inside).
    pub fn clearance(&self, x: f64, y: f64) -> f64 {
        (x - self.center.0).hypot(y - self.center.1) - self.radius
    }
}

/// `p(X, Y) = c0 + c1 X + c2 Y + c3 X² + c4 X Y + c5 Y²`; the free side is `p <= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleParabola {
    pub center: (f64, f64),
    pub radius: f64,
    pub margin: f64,
    pub normal: (f64, f64),
    pub coeffs: [f64; 6],
}

impl ObstacleParabola {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let c = &self.coeffs;
        c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
    }

    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let c = &self.coeffs;
        (c[1] + 2.0 * c[3] * x + c[4] * y, c[2] + c[4] * x + 2.0 * c[5] * y)
    }

    /// Height of the vertex above the centre (`h = a = radius + margin`).
    pub fn height(&self) -> f64 {
        self.radius + self.margin
    }
}

/// Downward-opening parabola `h (1 - (u / h)²) - w` in the frame with `w`
/// along `normal`, expanded to global coordinates. The margin is raised to
/// [`min_margin`] when needed so that the disc stays inside `p > 0`.
pub fn build_parabola(center: (f64, f64), radius: f64, margin: f64, normal: (f64, f64)) -> ObstacleParabola {
    let margin = margin.max(min_margin(radius));
    let h = radius + margin;
    let norm = normal.0.hypot(normal.1);
    let n = (normal.0 / norm, normal.1 / norm);
    let t = (n.1, -n.0);
    let k = 1.0 / h;
    let u0 = -(t.0 * center.0 + t.1 * center.1);
    let nc = n.0 * center.0 + n.1 * center.1;
    let coeffs = [
        h + nc - k * u0 * u0,
        -n.0 - 2.0 * k * u0 * t.0,
        -n.1 - 2.0 * k * u0 * t.1,
        -k * t.0 * t.0,
        -2.0 * k * t.0 * t.1,
        -k * t.1 * t.1,
    ];
    ObstacleParabola {
        center,
        radius,
        margin,
        normal: n,
        coeffs,
    }
}

/// Obstacles inside the planning corridor ahead of `s0`.
pub fn relevant_obstacles(obstacles: &[Obstacle], s0: f64, v0: f64, horizon: f64) -> Vec<Obstacle> {
    let lo = s0 - RELEVANCE_BEHIND;
    let hi = s0 + v0 * horizon + RELEVANCE_AHEAD;
    obstacles
        .iter()
        .filter(|o| o.s >= lo && o.s <= hi && o.offset.abs() < RELEVANCE_OFFSET)
        .copied()
        .collect()
}
