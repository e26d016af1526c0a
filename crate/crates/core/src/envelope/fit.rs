use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::hull::{ConvexHull, Point};
use super::sample::AccelSample;
use crate::error::{read_toml, write_toml, Error, Result};

/// Minimum hull area accepted by the fit (m²/s⁴).
pub const MIN_HULL_AREA: f64 = 1.0;
/// Dilation of the sampled hulls used for the inner-approximation check.
pub const HULL_DILATION: f64 = 1.05;
/// Angular resolution of the polygonized region (degrees).
pub const BOUNDARY_RESOLUTION_DEG: f64 = 1.0;

/// Convex description of the feasible accelerations.
///
/// `(ux/alpha)² + (uy/beta)² <= 1`, `ax_min(v) <= ux <= ax_max(v)`,
/// `A (ux, uy) <= b`, and `u_psi = gamma * uy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub alpha: f64,
    pub beta: f64,
    /// Half-plane normals in `(a_X, a_Y)`.
    pub a: Vec<[f64; 2]>,
    pub b: Vec<f64>,
    /// `c0 + c1 v + c2 v²`.
    pub ax_min_poly: [f64; 3],
    /// `c0 + c1 v`.
    pub ax_max_poly: [f64; 2],
    pub gamma: f64,
}

impl EnvelopeFit {
    /// The constants reported for the original test vehicle.
    pub fn reference() -> Self {
        EnvelopeFit {
            alpha: 9.4,
            beta: 9.0,
            a: vec![[2.6, 1.0], [2.6, -1.0]],
            b: vec![15.3, 15.3],
            ax_min_poly: [-9.3, -0.013, 0.00072],
            ax_max_poly: [4.3, -0.009],
            gamma: 0.56,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let fit: EnvelopeFit = read_toml(path.as_ref())?;
        fit.validate()?;
        Ok(fit)
    }

    pub fn to_file(&self, path: impl AsRef<Path>) -> Result<()> {
        write_toml(path.as_ref(), self)
    }

    pub fn ax_min(&self, vx0: f64) -> f64 {
        let [c0, c1, c2] = self.ax_min_poly;
        c0 + vx0 * (c1 + vx0 * c2)
    }

    pub fn ax_max(&self, vx0: f64) -> f64 {
        self.ax_max_poly[0] + self.ax_max_poly[1] * vx0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::InvalidParameter("ellipse semi-axes must be positive".into()));
        }
        if self.a.len() != self.b.len() {
            return Err(Error::InvalidParameter("half-plane rows and offsets differ in length".into()));
        }
        if self.b.iter().any(|&b| b <= 0.0) {
            return Err(Error::InvalidParameter("half-planes must contain the origin".into()));
        }
        for i in 0..=50 {
            let v = i as f64;
            if self.ax_min(v) >= 0.0 || self.ax_max(v) <= 0.0 {
                return Err(Error::InvalidParameter(format!("longitudinal bounds do not straddle zero at {v} m/s")));
            }
        }
        Ok(())
    }

    /// Membership of `(u_x, u_y, u_psi)` with the exact yaw coupling.
    pub fn contains(&self, vx0: f64, u: [f64; 3]) -> bool {
        self.violation(vx0, u[0], u[1]) <= 0.0 && (u[2] - self.gamma * u[1]).abs() <= 1e-9
    }

    /// Largest violation of the planar constraints (0 when inside).
    pub fn violation(&self, vx0: f64, ux: f64, uy: f64) -> f64 {
        let ellipse = (ux / self.alpha).powi(2) + (uy / self.beta).powi(2) - 1.0;
        let mut worst = ellipse.max(self.ax_min(vx0) - ux).max(ux - self.ax_max(vx0));
        for (row, &b) in self.a.iter().zip(&self.b) {
            worst = worst.max(row[0] * ux + row[1] * uy - b);
        }
        worst.max(0.0)
    }

    /// Distance from the origin to the region boundary along `(dx, dy)`.
    pub fn boundary_radius(&self, vx0: f64, dx: f64, dy: f64) -> f64 {
        let mut r = 1.0 / ((dx / self.alpha).powi(2) + (dy / self.beta).powi(2)).sqrt();
        if dx > 0.0 {
            r = r.min(self.ax_max(vx0) / dx);
        } else if dx < 0.0 {
            r = r.min(self.ax_min(vx0) / dx);
        }
        for (row, &b) in self.a.iter().zip(&self.b) {
            let proj = row[0] * dx + row[1] * dy;
            if proj > 0.0 {
                r = r.min(b / proj);
            }
        }
        r
    }

    /// Region boundary sampled along rays every `step_deg` degrees.
    pub fn polygon(&self, vx0: f64, step_deg: f64) -> Vec<Point> {
        let n = (360.0 / step_deg).round() as usize;
        (0..n)
            .map(|i| {
                let th = (i as f64 * step_deg).to_radians();
                let (dy, dx) = th.sin_cos();
                let r = self.boundary_radius(vx0, dx, dy);
                (r * dx, r * dy)
            })
            .collect()
    }

    /// Uniform scaling of the planar region about the origin.
    pub fn scaled(&self, factor: f64) -> Self {
        EnvelopeFit {
            alpha: self.alpha * factor,
            beta: self.beta * factor,
            a: self.a.clone(),
            b: self.b.iter().map(|b| b * factor).collect(),
            ax_min_poly: self.ax_min_poly.map(|c| c * factor),
            ax_max_poly: self.ax_max_poly.map(|c| c * factor),
            gamma: self.gamma,
        }
    }
}

/// Samples recorded at one initial longitudinal speed.
#[derive(Debug, Clone)]
pub struct SpeedGroup {
    pub vx0: f64,
    pub samples: Vec<AccelSample>,
}

impl SpeedGroup {
    pub fn hull(&self) -> ConvexHull {
        let pts: Vec<Point> = self.samples.iter().map(|s| (s.ax, s.ay)).collect();
        ConvexHull::from_points(&pts)
    }
}

/// Groups samples by their initial speed, in increasing speed order.
pub fn group_by_speed(samples: &[AccelSample]) -> Vec<SpeedGroup> {
    let mut groups: Vec<SpeedGroup> = Vec::new();
    for s in samples {
        match groups.iter_mut().find(|g| (g.vx0 - s.vx0).abs() < 1e-9) {
            Some(g) => g.samples.push(*s),
            None => groups.push(SpeedGroup {
                vx0: s.vx0,
                samples: vec![*s],
            }),
        }
    }
    groups.sort_by(|a, b| a.vx0.total_cmp(&b.vx0));
    groups
}

/// Diagnostics of a fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    /// Uniform shrink applied to reach inner approximation (1 = none).
    pub shrink: f64,
    /// RMS of `a_psi - gamma a_Y` divided by RMS of `a_psi`.
    pub gamma_residual_ratio: f64,
    pub hulls: Vec<(f64, ConvexHull)>,
    /// Per-group extreme longitudinal accelerations `(vx0, min, max)`.
    pub ax_extremes: Vec<(f64, f64, f64)>,
}

fn least_squares(rows: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let n = rows[0].len();
    let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(rhs);
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-12).map(|x| x.iter().copied().collect()).unwrap_or_else(|_| vec![0.0; n])
}

/// Fits the convex envelope to sampled accelerations.
pub fn fit_envelope(groups: &[SpeedGroup]) -> Result<(EnvelopeFit, FitReport)> {
    if groups.len() < 3 {
        return Err(Error::TooFewGroups(groups.len()));
    }
    let mut hulls = Vec::with_capacity(groups.len());
    for g in groups {
        let hull = g.hull();
        let area = hull.area();
        if area < MIN_HULL_AREA {
            return Err(Error::DegenerateHull { vx0: g.vx0, area });
        }
        if !hull.contains((0.0, 0.0), 0.0) {
            return Err(Error::InvalidParameter(format!("hull at {} m/s does not contain the origin", g.vx0)));
        }
        hulls.push((g.vx0, hull));
    }

    // longitudinal bounds from the per-group extremes
    let extremes: Vec<(f64, f64, f64)> = hulls.iter().map(|(v, h)| (*v, h.min_x(), h.max_x())).collect();
    let min_rows: Vec<Vec<f64>> = extremes.iter().map(|e| vec![1.0, e.0, e.0 * e.0]).collect();
    let min_rhs: Vec<f64> = extremes.iter().map(|e| e.1).collect();
    let c = least_squares(&min_rows, &min_rhs);
    let ax_min_poly = [c[0], c[1], c[2]];
    let max_rows: Vec<Vec<f64>> = extremes.iter().map(|e| vec![1.0, e.0]).collect();
    let max_rhs: Vec<f64> = extremes.iter().map(|e| e.2).collect();
    let c = least_squares(&max_rows, &max_rhs);
    let ax_max_poly = [c[0], c[1]];

    // friction ellipse on the braking half, where the box does not bind
    let mut rows = Vec::new();
    for (_, h) in &hulls {
        for &(x, y) in &h.vertices {
            if x <= 0.0 {
                rows.push(vec![x * x, y * y]);
            }
        }
    }
    let pq = least_squares(&rows, &vec![1.0; rows.len()]);
    if !(pq[0] > 0.0 && pq[1] > 0.0) {
        return Err(Error::InvalidParameter("ellipse fit did not produce positive semi-axes".into()));
    }
    let alpha = 1.0 / pq[0].sqrt();
    let beta = 1.0 / pq[1].sqrt();

    // symmetric corner cut on the traction side, fitted to the folded
    // hull vertices between the lateral peak and the longitudinal peak
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (_, h) in &hulls {
        let x_hi = h.max_x();
        for &(x, y) in &h.vertices {
            if x > 0.25 * x_hi {
                rows.push(vec![1.0, -x]);
                rhs.push(y.abs());
            }
        }
    }
    if rows.len() < 2 {
        return Err(Error::InvalidParameter("too few traction-side hull vertices".into()));
    }
    let line = least_squares(&rows, &rhs);
    let (b0, k) = (line[0], line[1].max(0.0));

    // yaw coupling through the origin
    let (mut num, mut den, mut psi_sq) = (0.0, 0.0, 0.0);
    for s in groups.iter().flat_map(|g| &g.samples) {
        num += s.apsi * s.ay;
        den += s.ay * s.ay;
        psi_sq += s.apsi * s.apsi;
    }
    let gamma = if den > 0.0 { num / den } else { 0.0 };
    let resid_sq: f64 = groups
        .iter()
        .flat_map(|g| &g.samples)
        .map(|s| (s.apsi - gamma * s.ay).powi(2))
        .sum();
    let gamma_residual_ratio = if psi_sq > 0.0 { (resid_sq / psi_sq).sqrt() } else { 0.0 };

    let raw = EnvelopeFit {
        alpha,
        beta,
        a: vec![[k, 1.0], [k, -1.0]],
        b: vec![b0, b0],
        ax_min_poly,
        ax_max_poly,
        gamma,
    };

    // shrink uniformly until every boundary ray stays inside the dilated hulls
    let mut shrink: f64 = 1.0;
    for (v, h) in &hulls {
        let dilated = h.dilated(HULL_DILATION);
        for (px, py) in raw.polygon(*v, BOUNDARY_RESOLUTION_DEG) {
            let r = px.hypot(py);
            if r <= 0.0 {
                continue;
            }
            let limit = dilated.ray_distance(px / r, py / r);
            shrink = shrink.min(limit / r);
        }
    }
    let fit = if shrink < 1.0 {
        raw.scaled(shrink * (1.0 - 1e-9))
    } else {
        raw
    };
    fit.validate()?;
    Ok((
        fit,
        FitReport {
            shrink,
            gamma_residual_ratio,
            hulls,
            ax_extremes: extremes,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_polynomial_at_20() {
        let f = EnvelopeFit::reference();
        assert!((f.ax_min(20.0) - (-9.3 - 0.26 + 0.288)).abs() < 1e-12);
        assert!((f.ax_min(20.0) + 9.272).abs() < 1e-12);
        assert!((f.ax_max(0.0) - 4.3).abs() < 1e-15);
    }

    #[test]
    fn membership() {
        let f = EnvelopeFit::reference();
        assert!(f.contains(10.0, [0.0, 0.0, 0.0]));
        assert!(f.contains(10.0, [0.0, f.beta, f.gamma * f.beta]));
        assert!(!f.contains(10.0, [f.ax_max(10.0) + 0.1, 0.0, 0.0]));
        assert!(!f.contains(10.0, [0.0, 1.0, 0.0]));
        assert!(!f.contains(10.0, [-9.0, 5.0, 5.0 * f.gamma]));
    }

    #[test]
    fn boundary_radius_matches_violation() {
        let f = EnvelopeFit::reference();
        for (px, py) in f.polygon(15.0, 5.0) {
            assert!(f.violation(15.0, px, py) < 1e-12);
            assert!(f.violation(15.0, px * 1.001, py * 1.001) > 0.0);
        }
    }

    fn synthetic(vx0: f64, alpha: f64, beta: f64, n: usize) -> SpeedGroup {
        let samples = (0..n)
            .map(|i| {
                let th = i as f64 / n as f64 * std::f64::consts::TAU;
                let r = if i % 3 == 0 { 0.5 } else { 1.0 };
                let (ax, ay) = (r * alpha * th.cos(), r * beta * th.sin());
                AccelSample {
                    vx0,
                    vy0: 0.0,
                    ax,
                    ay,
                    apsi: 0.5 * ay,
                }
            })
            .collect();
        SpeedGroup { vx0, samples }
    }

    #[test]
    fn recovers_synthetic_ellipse() {
        let groups: Vec<_> = [5.0, 15.0, 25.0].iter().map(|&v| synthetic(v, 8.0, 7.0, 720)).collect();
        let (fit, report) = fit_envelope(&groups).unwrap();
        assert!((fit.alpha / 8.0 - 1.0).abs() < 0.02, "{}", fit.alpha);
        assert!((fit.beta / 7.0 - 1.0).abs() < 0.02, "{}", fit.beta);
        assert!((fit.gamma - 0.5).abs() < 1e-12);
        assert!(report.gamma_residual_ratio < 1e-12);
    }

    #[test]
    fn too_few_groups() {
        let groups: Vec<_> = [5.0, 15.0].iter().map(|&v| synthetic(v, 8.0, 7.0, 100)).collect();
        assert!(matches!(fit_envelope(&groups), Err(Error::TooFewGroups(2))));
    }

    #[test]
    fn degenerate_hull_rejected() {
        let mut groups: Vec<_> = [5.0, 15.0, 25.0].iter().map(|&v| synthetic(v, 8.0, 7.0, 100)).collect();
        groups[1] = synthetic(15.0, 0.5, 0.5, 100);
        assert!(matches!(fit_envelope(&groups), Err(Error::DegenerateHull { .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("envelope.cfg");
        let f = EnvelopeFit::reference();
        f.to_file(&path).unwrap();
        assert_eq!(EnvelopeFit::from_file(&path).unwrap(), f);
    }
}
