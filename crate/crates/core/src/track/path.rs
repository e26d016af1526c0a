use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal spacing of the resampled polyline (m).
pub const PATH_SPACING: f64 = 0.25;
/// Queries farther than this from the path are treated as lost (m).
pub const MAX_PROJECTION_DISTANCE: f64 = 50.0;

/// One piece of a reference path. Angles are in degrees, positive to the left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Segment {
    Straight {
        length: f64,
    },
    Arc {
        radius: f64,
        angle: f64,
    },
    /// Cubic Bézier turn. The end point lies `chord` metres away along the
    /// mean heading; control points sit `handle` metres along the entry and
    /// exit tangents.
    Bezier {
        angle: f64,
        #[serde(default = "default_handle")]
        handle: f64,
        #[serde(default = "default_chord")]
        chord: f64,
    },
}

fn default_handle() -> f64 {
    15.0
}

fn default_chord() -> f64 {
    30.0
}

impl Segment {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Segment::Straight { length } => length > 0.0,
            Segment::Arc { radius, angle } => radius > 0.0 && angle != 0.0,
            Segment::Bezier { angle, handle, chord } => angle.abs() < 180.0 && handle > 0.0 && chord > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid path segment {self:?}")))
        }
    }
}

/// The seven-piece test track: straight, R20 half circle, long straight,
/// 135° Bézier turn, straight, R10 half circle, −135° Bézier turn.
pub fn reference_segments() -> Vec<Segment> {
    vec![
        Segment::Straight { length: 60.0 },
        Segment::Arc {
            radius: 20.0,
            angle: 180.0,
        },
        Segment::Straight { length: 200.0 },
        Segment::Bezier {
            angle: 135.0,
            handle: 15.0,
            chord: 30.0,
        },
        Segment::Straight { length: 100.0 },
        Segment::Arc {
            radius: 10.0,
            angle: 180.0,
        },
        Segment::Bezier {
            angle: -135.0,
            handle: 15.0,
            chord: 30.0,
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub curvature: f64,
}

/// Arc-length parametrized polyline.
#[derive(Debug, Clone)]
pub struct RefPath {
    points: Vec<PathPoint>,
    /// Arc length of the track proper, excluding any run-out.
    track_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub s: f64,
    /// Signed lateral offset, positive to the left of the path (m).
    pub offset: f64,
    pub distance: f64,
}

fn bezier(p: [(f64, f64); 4], t: f64) -> ((f64, f64), (f64, f64), (f64, f64)) {
    let m = 1.0 - t;
    let pos = (
        m * m * m * p[0].0 + 3.0 * m * m * t * p[1].0 + 3.0 * m * t * t * p[2].0 + t * t * t * p[3].0,
        m * m * m * p[0].1 + 3.0 * m * m * t * p[1].1 + 3.0 * m * t * t * p[2].1 + t * t * t * p[3].1,
    );
    let d1 = (
        3.0 * m * m * (p[1].0 - p[0].0) + 6.0 * m * t * (p[2].0 - p[1].0) + 3.0 * t * t * (p[3].0 - p[2].0),
        3.0 * m * m * (p[1].1 - p[0].1) + 6.0 * m * t * (p[2].1 - p[1].1) + 3.0 * t * t * (p[3].1 - p[2].1),
    );
    let d2 = (
        6.0 * m * (p[2].0 - 2.0 * p[1].0 + p[0].0) + 6.0 * t * (p[3].0 - 2.0 * p[2].0 + p[1].0),
        6.0 * m * (p[2].1 - 2.0 * p[1].1 + p[0].1) + 6.0 * t * (p[3].1 - 2.0 * p[2].1 + p[1].1),
    );
    (pos, d1, d2)
}

/// Densely samples one segment starting at `(x, y, heading)`. The first
/// sample (the start point) is omitted.
fn sample_segment(seg: &Segment, x: f64, y: f64, heading: f64, step: f64) -> Vec<(f64, f64, f64, f64)> {
    match *seg {
        Segment::Straight { length } => {
            let n = (length / step).ceil().max(1.0) as usize;
            let (sh, ch) = heading.sin_cos();
            (1..=n)
                .map(|i| {
                    let d = length * i as f64 / n as f64;
                    (x + d * ch, y + d * sh, heading, 0.0)
                })
                .collect()
        }
        Segment::Arc { radius, angle } => {
            let sweep = angle.to_radians();
            let sign = sweep.signum();
            let (cx, cy) = (x - sign * radius * heading.sin(), y + sign * radius * heading.cos());
            let n = (radius * sweep.abs() / step).ceil().max(1.0) as usize;
            (1..=n)
                .map(|i| {
                    let h = heading + sweep * i as f64 / n as f64;
                    (cx + sign * radius * h.sin(), cy - sign * radius * h.cos(), h, sign / radius)
                })
                .collect()
        }
        Segment::Bezier { angle, handle, chord } => {
            let turn = angle.to_radians();
            let (s0, c0) = heading.sin_cos();
            let (s1, c1) = (heading + turn).sin_cos();
            let (sm, cm) = (heading + 0.5 * turn).sin_cos();
            let end = (x + chord * cm, y + chord * sm);
            let ctrl = [(x, y), (x + handle * c0, y + handle * s0), (end.0 - handle * c1, end.1 - handle * s1), end];
            let n = (4.0 * chord / step).ceil() as usize;
            let mut unwrap = heading;
            (1..=n)
                .map(|i| {
                    let t = i as f64 / n as f64;
                    let (p, d1, d2) = bezier(ctrl, t);
                    let h = d1.1.atan2(d1.0);
                    unwrap += wrap_angle(h - unwrap);
                    let k = (d1.0 * d2.1 - d1.1 * d2.0) / (d1.0 * d1.0 + d1.1 * d1.1).powf(1.5);
                    (p.0, p.1, unwrap, k)
                })
                .collect()
        }
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a < -PI {
        a += 2.0 * PI;
    }
    a
}

impl RefPath {
    /// Builds the path from segments starting at `(x0, y0)` with heading `heading0`.
    pub fn from_segments(segments: &[Segment], x0: f64, y0: f64, heading0: f64) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidParameter("a path needs at least one segment".into()));
        }
        let fine_step = 0.01;
        let mut fine = vec![(x0, y0, heading0, 0.0)];
        for seg in segments {
            seg.validate()?;
            let &(x, y, h, _) = fine.last().unwrap();
            fine.extend(sample_segment(seg, x, y, h, fine_step));
        }
        // curvature at the first sample follows the first segment
        if fine.len() > 1 {
            fine[0].3 = fine[1].3;
        }
        let mut cum = vec![0.0; fine.len()];
        for i in 1..fine.len() {
            cum[i] = cum[i - 1] + (fine[i].0 - fine[i - 1].0).hypot(fine[i].1 - fine[i - 1].1);
        }
        let total = *cum.last().unwrap();
        let n = (total / PATH_SPACING).ceil() as usize;
        let mut points = Vec::with_capacity(n + 1);
        let mut j = 0;
        for i in 0..=n {
            let s = total * i as f64 / n as f64;
            while j + 2 < fine.len() && cum[j + 1] < s {
                j += 1;
            }
            let span = cum[j + 1] - cum[j];
            let f = if span > 0.0 { ((s - cum[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
            let a = fine[j];
            let b = fine[j + 1];
            points.push(PathPoint {
                s,
                x: a.0 + f * (b.0 - a.0),
                y: a.1 + f * (b.1 - a.1),
                heading: a.2 + f * (b.2 - a.2),
                curvature: if f < 0.5 { a.3 } else { b.3 },
            });
        }
        Ok(RefPath {
            points,
            track_length: total,
        })
    }

    pub fn reference_track() -> Self {
        Self::from_segments(&reference_segments(), 0.0, 0.0, 0.0).expect("reference segments are valid")
    }

    /// Copy extended by a straight of `length` metres along the final heading.
    /// The track length is unchanged.
    pub fn with_runout(&self, length: f64) -> Self {
        let last = *self.points.last().unwrap();
        let n = (length / PATH_SPACING).ceil() as usize;
        let mut points = self.points.clone();
        let (sh, ch) = last.heading.sin_cos();
        for i in 1..=n {
            let d = length * i as f64 / n as f64;
            points.push(PathPoint {
                s: last.s + d,
                x: last.x + d * ch,
                y: last.y + d * sh,
                heading: last.heading,
                curvature: 0.0,
            });
        }
        RefPath {
            points,
            track_length: self.track_length,
        }
    }

    pub fn points(&self) -> &[PathPoint] {
        &self.points
    }

    pub fn track_length(&self) -> f64 {
        self.track_length
    }

    /// Arc length of the last polyline vertex, including any run-out.
    pub fn total_length(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.s)
    }

    fn index_at(&self, s: f64) -> usize {
        let i = self.points.partition_point(|p| p.s <= s);
        i.clamp(1, self.points.len() - 1) - 1
    }

    /// Interpolated pose at arc length `s` (clamped to the path).
    pub fn point_at(&self, s: f64) -> PathPoint {
        let s = s.clamp(0.0, self.total_length());
        let i = self.index_at(s);
        let a = self.points[i];
        let b = self.points[i + 1];
        let f = ((s - a.s) / (b.s - a.s)).clamp(0.0, 1.0);
        PathPoint {
            s,
            x: a.x + f * (b.x - a.x),
            y: a.y + f * (b.y - a.y),
            heading: a.heading + f * (b.heading - a.heading),
            curvature: a.curvature + f * (b.curvature - a.curvature),
        }
    }

    /// Vertices with `s` in `[s0, s1]`, plus interpolated end points.
    pub fn sample_range(&self, s0: f64, s1: f64) -> Vec<PathPoint> {
        let mut out = vec![self.point_at(s0)];
        out.extend(self.points.iter().copied().filter(|p| p.s > s0 + 1e-9 && p.s < s1 - 1e-9));
        out.push(self.point_at(s1));
        out
    }

    /// Closest point on the path. Ties go to the larger arc length.
    pub fn project(&self, x: f64, y: f64) -> Result<Projection> {
        self.project_between(x, y, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Closest point among path vertices with arc length in `[s_lo, s_hi]`.
    pub fn project_between(&self, x: f64, y: f64, s_lo: f64, s_hi: f64) -> Result<Projection> {
        let d2: Vec<f64> = self
            .points
            .iter()
            .map(|p| {
                if p.s < s_lo || p.s > s_hi {
                    f64::INFINITY
                } else {
                    (p.x - x).powi(2) + (p.y - y).powi(2)
                }
            })
            .collect();
        let best = d2.iter().copied().fold(f64::INFINITY, f64::min);
        let distance = best.sqrt();
        if !(distance <= MAX_PROJECTION_DISTANCE) {
            return Err(Error::OffPath {
                distance,
                limit: MAX_PROJECTION_DISTANCE,
            });
        }
        let slack = (distance + PATH_SPACING).powi(2) - best + 1e-9;
        let n = self.points.len();
        let mut chosen: Option<(f64, f64)> = None;
        for i in 0..n {
            if d2[i] > best + slack {
                continue;
            }
            let left = if i > 0 { d2[i - 1] } else { f64::INFINITY };
            let right = if i + 1 < n { d2[i + 1] } else { f64::INFINITY };
            if d2[i] > left || d2[i] > right {
                continue;
            }
            let (s, dist2) = self.refine(i, &d2);
            chosen = match chosen {
                Some((cs, cd)) if dist2 > cd + 1e-9 || (dist2 > cd - 1e-9 && s <= cs) => Some((cs, cd)),
                _ => Some((s, dist2)),
            };
        }
        let (s, _) = chosen.unwrap_or_else(|| {
            let i = d2.iter().position(|d| *d == best).unwrap_or(0);
            (self.points[i].s, best)
        });
        let p = self.point_at(s);
        let (sh, ch) = p.heading.sin_cos();
        let (dx, dy) = (x - p.x, y - p.y);
        Ok(Projection {
            s,
            offset: -sh * dx + ch * dy,
            distance: dx.hypot(dy),
        })
    }

    /// Quadratic interpolation of the squared distance around vertex `i`.
    fn refine(&self, i: usize, d2: &[f64]) -> (f64, f64) {
        let n = self.points.len();
        if i == 0 || i + 1 == n || !d2[i - 1].is_finite() || !d2[i + 1].is_finite() {
            return (self.points[i].s, d2[i]);
        }
        let (sa, sb, sc) = (self.points[i - 1].s, self.points[i].s, self.points[i + 1].s);
        let (fa, fb, fc) = (d2[i - 1], d2[i], d2[i + 1]);
        let h1 = sb - sa;
        let h2 = sc - sb;
        let da = (fb - fa) / h1;
        let dc = (fc - fb) / h2;
        let curv = (dc - da) / (h1 + h2);
        if curv <= 0.0 {
            return (sb, fb);
        }
        // f(s) = fb + g (s - sb) + curv (s - sb)²
        let g = da + curv * h1;
        let ds = (-g / (2.0 * curv)).clamp(-h1, h2);
        (sb + ds, (fb + g * ds + curv * ds * ds).max(0.0))
    }

    /// Writes `s,x,y,heading,curvature` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["s", "x", "y", "heading", "curvature"])?;
        for p in &self.points {
            w.write_record(&[p.s, p.x, p.y, p.heading, p.curvature].map(|v| format!("{v:.6}")))?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }
}
