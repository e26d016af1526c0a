use nalgebra::{DMatrix, DVector};

use super::path::RefPath;
use crate::error::{Error, Result};

/// Shortest window that is fitted (m).
pub const MIN_WINDOW_LENGTH: f64 = 10.0;
/// Points at which the fitted curvature is evaluated.
pub const CURVATURE_SAMPLES: usize = 100;

/// Quintic local fit of the path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathWindow {
    pub s0: f64,
    pub length: f64,
    /// Coefficients in powers of `s - s0`, lowest first.
    pub px: [f64; 6],
    pub py: [f64; 6],
    pub kappa_max: f64,
    /// Speed cap over the window (m/s); infinite until set.
    pub v_max: f64,
    pub rms_residual: f64,
    pub max_residual: f64,
}

/// Value and first two derivatives of a polynomial at `t`.
pub fn poly_eval(c: &[f64; 6], t: f64) -> (f64, f64, f64) {
    let mut v = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for k in (0..6).rev() {
        d2 = d2 * t + d1 * 2.0;
        d1 = d1 * t + v;
        v = v * t + c[k];
    }
    (v, d1, d2)
}

impl PathWindow {
    /// Least-squares quintic fit of `X(s)` and `Y(s)` over `[s0, s0 + length]`.
    pub fn fit(path: &RefPath, s0: f64, length: f64) -> Result<Self> {
        let usable = path.total_length() - s0;
        if !(length >= MIN_WINDOW_LENGTH) || usable < MIN_WINDOW_LENGTH {
            return Err(Error::IllConditionedFit(usable.min(length)));
        }
        let length = length.min(usable);
        let pts = path.sample_range(s0, s0 + length);
        let a = DMatrix::from_fn(pts.len(), 6, |i, k| ((pts[i].s - s0) / length).powi(k as i32));
        let bx = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.x));
        let by = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.y));
        let svd = a.clone().svd(true, true);
        let sx = svd.solve(&bx, 1e-14).map_err(|_| Error::IllConditionedFit(length))?;
        let sy = svd.solve(&by, 1e-14).map_err(|_| Error::IllConditionedFit(length))?;
        let mut px = [0.0; 6];
        let mut py = [0.0; 6];
        for k in 0..6 {
            let scale = length.powi(k as i32);
            px[k] = sx[k] / scale;
            py[k] = sy[k] / scale;
        }
        let rx = &a * &sx - &bx;
        let ry = &a * &sy - &by;
        let mut sum = 0.0;
        let mut worst: f64 = 0.0;
        for i in 0..pts.len() {
            let e = rx[i].hypot(ry[i]);
            sum += e * e;
            worst = worst.max(e);
        }
        let mut w = PathWindow {
            s0,
            length,
            px,
            py,
            kappa_max: 0.0,
            v_max: f64::INFINITY,
            rms_residual: (sum / pts.len() as f64).sqrt(),
            max_residual: worst,
        };
        w.kappa_max = (0..CURVATURE_SAMPLES)
            .map(|i| w.curvature(length * i as f64 / (CURVATURE_SAMPLES - 1) as f64).abs())
            .fold(0.0, f64::max);
        Ok(w)
    }

    /// Position on the fitted curve at `ds = s - s0`.
    pub fn position(&self, ds: f64) -> (f64, f64) {
        (poly_eval(&self.px, ds).0, poly_eval(&self.py, ds).0)
    }

    /// First derivatives `(X', Y')` at `ds`.
    pub fn tangent(&self, ds: f64) -> (f64, f64) {
        (poly_eval(&self.px, ds).1, poly_eval(&self.py, ds).1)
    }

    pub fn curvature(&self, ds: f64) -> f64 {
        let (_, x1, x2) = poly_eval(&self.px, ds);
        let (_, y1, y2) = poly_eval(&self.py, ds);
        (x1 * y2 - y1 * x2) / (x1 * x1 + y1 * y1).powf(1.5)
    }

    /// `min(v0 + ax_max T, sqrt(mu g / kappa_max))`.
    pub fn speed_limit(&self, v0: f64, ax_max: f64, horizon: f64, mu: f64) -> f64 {
        let reach = v0 + ax_max * horizon;
        if self.kappa_max > 0.0 {
            reach.min((mu * crate::GRAVITY / self.kappa_max).sqrt())
        } else {
            reach
        }
    }

    pub fn with_speed_limit(mut self, v0: f64, ax_max: f64, horizon: f64, mu: f64) -> Self {
        self.v_max = self.speed_limit(v0, ax_max, horizon, mu);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::path::Segment;

    #[test]
    fn polynomial_evaluation() {
        let c = [1.0, 2.0, 3.0, 0.0, 0.0, 1.0];
        let (v, d1, d2) = poly_eval(&c, 2.0);
        assert_eq!(v, 1.0 + 4.0 + 12.0 + 32.0);
        assert_eq!(d1, 2.0 + 12.0 + 80.0);
        assert_eq!(d2, 6.0 + 160.0);
    }

    #[test]
    fn straight_window() {
        let path = RefPath::reference_track();
        let w = PathWindow::fit(&path, 5.0, 40.0).unwrap().with_speed_limit(10.0, 3.0, 3.0, 1.0);
        assert!(w.kappa_max <= 1e-4);
        assert!((w.v_max - 19.0).abs() < 1e-9);
        assert!(w.rms_residual < 1e-6);
        let (x, y) = w.position(10.0);
        assert!((x - 15.0).abs() < 1e-6 && y.abs() < 1e-6);
    }

    #[test]
    fn circle_window_speed() {
        let segs = [Segment::Arc {
            radius: 20.0,
            angle: 180.0,
        }];
        let path = RefPath::from_segments(&segs, 0.0, 0.0, 0.0).unwrap();
        let w = PathWindow::fit(&path, 5.0, 30.0).unwrap().with_speed_limit(10.0, 3.0, 3.0, 1.0);
        assert!((w.kappa_max - 0.05).abs() < 0.002, "{}", w.kappa_max);
        assert!((w.v_max - 14.0).abs() < 0.3, "{}", w.v_max);
        assert!(w.v_max <= (crate::GRAVITY / w.kappa_max).sqrt() + 1e-9);
    }

    #[test]
    fn short_windows_rejected() {
        let path = RefPath::reference_track();
        assert!(PathWindow::fit(&path, 0.0, 5.0).is_err());
        assert!(PathWindow::fit(&path, path.total_length() - 3.0, 20.0).is_err());
    }

    #[test]
    fn tight_windows_fit_closely() {
        let path = RefPath::reference_track();
        let mut s = 0.0;
        while s + 20.0 < path.track_length() {
            let w = PathWindow::fit(&path, s, 20.0).unwrap();
            assert!(w.rms_residual < 0.06, "s {s}: {}", w.rms_residual);
            s += 5.0;
        }
    }
}
