//! Planar convex hulls and the ray queries used to compare regions.

pub type Point = (f64, f64);

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise convex polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexHull {
    pub vertices: Vec<Point>,
}

impl ConvexHull {
    /// Andrew's monotone chain. Collinear points are dropped.
    pub fn from_points(points: &[Point]) -> Self {
        let mut pts: Vec<Point> = points.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts.dedup();
        if pts.len() < 3 {
            return ConvexHull { vertices: pts };
        }
        let mut lower: Vec<Point> = Vec::new();
        for &p in &pts {
            while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
                lower.pop();
            }
            lower.push(p);
        }
        let mut upper: Vec<Point> = Vec::new();
        for &p in pts.iter().rev() {
            while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
                upper.pop();
            }
            upper.push(p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        ConvexHull { vertices: lower }
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut a = 0.0;
        for i in 0..n {
            let (x0, y0) = self.vertices[i];
            let (x1, y1) = self.vertices[(i + 1) % n];
            a += x0 * y1 - x1 * y0;
        }
        0.5 * a
    }

    pub fn centroid(&self) -> Point {
        let n = self.vertices.len();
        let area = self.area();
        if area.abs() < 1e-300 {
            let k = n.max(1) as f64;
            let sx: f64 = self.vertices.iter().map(|v| v.0).sum();
            let sy: f64 = self.vertices.iter().map(|v| v.1).sum();
            return (sx / k, sy / k);
        }
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            let (x0, y0) = self.vertices[i];
            let (x1, y1) = self.vertices[(i + 1) % n];
            let c = x0 * y1 - x1 * y0;
            cx += (x0 + x1) * c;
            cy += (y0 + y1) * c;
        }
        (cx / (6.0 * area), cy / (6.0 * area))
    }

    /// Hull scaled by `factor` about its centroid.
    pub fn dilated(&self, factor: f64) -> Self {
        let (cx, cy) = self.centroid();
        ConvexHull {
            vertices: self
                .vertices
                .iter()
                .map(|&(x, y)| (cx + factor * (x - cx), cy + factor * (y - cy)))
                .collect(),
        }
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
            cross(a, b, p) >= -tol * len
        })
    }

    /// Distance from the origin to the boundary along the unit direction
    /// `(dx, dy)`. The origin must lie strictly inside.
    pub fn ray_distance(&self, dx: f64, dy: f64) -> f64 {
        let n = self.vertices.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let (ex, ey) = (b.0 - a.0, b.1 - a.1);
            // solve t d = a + s e
            let det = dx * (-ey) - dy * (-ex);
            if det.abs() < 1e-300 {
                continue;
            }
            let t = (a.0 * (-ey) - a.1 * (-ex)) / det;
            let s = (dx * a.1 - dy * a.0) / det;
            if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) {
                best = best.min(t);
            }
        }
        best
    }

    pub fn max_x(&self) -> f64 {
        self.vertices.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_x(&self) -> f64 {
        self.vertices.iter().map(|v| v.0).fold(f64::INFINITY, f64::min)
    }

    /// Extent of the hull in y along the vertical line `x`: `(min, max)`.
    pub fn y_range_at(&self, x: f64) -> Option<(f64, f64)> {
        let n = self.vertices.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let (x0, x1) = if a.0 <= b.0 { (a.0, b.0) } else { (b.0, a.0) };
            if x < x0 || x > x1 {
                continue;
            }
            let y = if (b.0 - a.0).abs() < 1e-300 {
                lo = lo.min(a.1.min(b.1));
                hi = hi.max(a.1.max(b.1));
                continue;
            } else {
                a.1 + (x - a.0) / (b.0 - a.0) * (b.1 - a.1)
            };
            lo = lo.min(y);
            hi = hi.max(y);
        }
        (lo <= hi).then_some((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> ConvexHull {
        ConvexHull::from_points(&[(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (0.0, 0.0), (0.5, 1.0)])
    }

    #[test]
    fn hull_of_square() {
        let h = square();
        assert_eq!(h.vertices.len(), 4);
        assert!((h.area() - 4.0).abs() < 1e-12);
        let (cx, cy) = h.centroid();
        assert!(cx.abs() < 1e-12 && cy.abs() < 1e-12);
    }

    #[test]
    fn containment_and_rays() {
        let h = square();
        assert!(h.contains((0.99, -0.99), 0.0));
        assert!(!h.contains((1.01, 0.0), 0.0));
        assert!((h.ray_distance(1.0, 0.0) - 1.0).abs() < 1e-12);
        let d = std::f64::consts::FRAC_1_SQRT_2;
        assert!((h.ray_distance(d, d) - 2f64.sqrt()).abs() < 1e-12);
        assert!((h.dilated(1.05).ray_distance(0.0, -1.0) - 1.05).abs() < 1e-12);
    }

    #[test]
    fn vertical_extent() {
        let h = ConvexHull::from_points(&[(0.0, 0.0), (2.0, 0.0), (0.0, 2.0)]);
        let (lo, hi) = h.y_range_at(1.0).unwrap();
        assert!(lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        assert!(h.y_range_at(3.0).is_none());
    }

    #[test]
    fn degenerate_hull_has_no_area() {
        let h = ConvexHull::from_points(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]);
        assert_eq!(h.area(), 0.0);
    }
}
