//! Planar geometry: poses, oriented boxes, polygons and polylines.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = a.rem_euclid(two_pi);
    if r > PI {
        r -= two_pi;
    }
    // rem_euclid can return exactly 2π for tiny negative inputs.
    if r <= -PI {
        r += two_pi;
    }
    r
}

/// Serialized as a two-element array `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, o: &Point2) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn sub(&self, o: &Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(&self, o: &Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(&self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }

    pub fn dot(&self, o: &Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(&self, o: &Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Position plus heading. Heading is kept in `(-π, π]` by every constructor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// A pose expressed in the frame of some other pose.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelPose {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl RelPose {
    pub const ZERO: RelPose = RelPose { dx: 0.0, dy: 0.0, dtheta: 0.0 };

    pub fn new(dx: f64, dy: f64, dtheta: f64) -> Self {
        Self { dx, dy, dtheta: normalize_angle(dtheta) }
    }

    pub fn is_finite(&self) -> bool {
        self.dx.is_finite() && self.dy.is_finite() && self.dtheta.is_finite()
    }
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: normalize_angle(heading) }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }

    /// Applies a relative pose expressed in this pose's frame.
    pub fn compose(&self, rel: &RelPose) -> Pose2 {
        let (s, c) = self.heading.sin_cos();
        Pose2::new(self.x + c * rel.dx - s * rel.dy, self.y + s * rel.dx + c * rel.dy, self.heading + rel.dtheta)
    }

    /// Expresses `other` in this pose's frame (inverse of [`Pose2::compose`]).
    pub fn relative(&self, other: &Pose2) -> RelPose {
        let (s, c) = self.heading.sin_cos();
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        RelPose::new(c * dx + s * dy, -s * dx + c * dy, other.heading - self.heading)
    }

    /// Rotates a world-frame point into this pose's frame.
    pub fn to_local(&self, p: &Point2) -> Point2 {
        let (s, c) = self.heading.sin_cos();
        let dx = p.x - self.x;
        let dy = p.y - self.y;
        Point2::new(c * dx + s * dy, -s * dx + c * dy)
    }

    /// Applies a global rigid motion (rotation about the origin, then translation).
    pub fn transformed(&self, rotation: f64, tx: f64, ty: f64) -> Pose2 {
        let p = rotate_point(&self.position(), rotation);
        Pose2::new(p.x + tx, p.y + ty, self.heading + rotation)
    }
}

pub fn rotate_point(p: &Point2, angle: f64) -> Point2 {
    let (s, c) = angle.sin_cos();
    Point2::new(c * p.x - s * p.y, s * p.x + c * p.y)
}

/// Oriented rectangle used for collision tests.
#[derive(Debug, Clone, Copy)]
pub struct Obb {
    pub center: Point2,
    pub axes: [Point2; 2],
    pub half_extents: [f64; 2],
}

impl Obb {
    pub fn new(pose: &Pose2, length: f64, width: f64) -> Self {
        let (s, c) = pose.heading.sin_cos();
        Self {
            center: pose.position(),
            axes: [Point2::new(c, s), Point2::new(-s, c)],
            half_extents: [0.5 * length, 0.5 * width],
        }
    }

    pub fn corners(&self) -> [Point2; 4] {
        let ex = self.axes[0].scale(self.half_extents[0]);
        let ey = self.axes[1].scale(self.half_extents[1]);
        [
            self.center.add(&ex).add(&ey),
            self.center.sub(&ex).add(&ey),
            self.center.sub(&ex).sub(&ey),
            self.center.add(&ex).sub(&ey),
        ]
    }

    fn projected_radius(&self, axis: &Point2) -> f64 {
        self.half_extents[0] * self.axes[0].dot(axis).abs() + self.half_extents[1] * self.axes[1].dot(axis).abs()
    }

    pub fn bounding_radius(&self) -> f64 {
        self.half_extents[0].hypot(self.half_extents[1])
    }

    /// Separating-axis test. Boxes that merely touch do not overlap.
    pub fn overlaps(&self, other: &Obb) -> bool {
        let d = other.center.sub(&self.center);
        let reach = self.bounding_radius() + other.bounding_radius();
        if d.dot(&d) >= reach * reach {
            return false;
        }
        for axis in self.axes.iter().chain(other.axes.iter()) {
            let dist = d.dot(axis).abs();
            if dist >= self.projected_radius(axis) + other.projected_radius(axis) {
                return false;
            }
        }
        true
    }

    pub fn contains(&self, p: &Point2) -> bool {
        let d = p.sub(&self.center);
        d.dot(&self.axes[0]).abs() <= self.half_extents[0] && d.dot(&self.axes[1]).abs() <= self.half_extents[1]
    }
}

fn point_segment_distance(p: &Point2, a: &Point2, b: &Point2) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(&ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(&ab) / len2).clamp(0.0, 1.0);
    p.dist(&a.add(&ab.scale(t)))
}

const ON_EDGE_TOL: f64 = 1e-9;

/// Even-odd point-in-polygon test; points on an edge count as inside.
pub fn point_in_polygon(p: &Point2, poly: &[Point2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (&poly[i], &poly[j]);
        if (pi.y > p.y) != (pj.y > p.y) {
            let x_cross = pj.x + (p.y - pj.y) * (pi.x - pj.x) / (pi.y - pj.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside || (0..n).any(|i| point_segment_distance(p, &poly[i], &poly[(i + 1) % n]) <= ON_EDGE_TOL)
}

/// Checks that a closed polygon has no two non-adjacent edges that intersect.
pub fn polygon_is_simple(poly: &[Point2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let a1 = poly[i];
        let a2 = poly[(i + 1) % n];
        for j in (i + 1)..n {
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let b1 = poly[j];
            let b2 = poly[(j + 1) % n];
            if segments_intersect(&a1, &a2, &b1, &b2) {
                return false;
            }
        }
    }
    true
}

fn segments_intersect(p1: &Point2, p2: &Point2, q1: &Point2, q2: &Point2) -> bool {
    let d1 = q2.sub(q1).cross(&p1.sub(q1));
    let d2 = q2.sub(q1).cross(&p2.sub(q1));
    let d3 = p2.sub(p1).cross(&q1.sub(p1));
    let d4 = p2.sub(p1).cross(&q2.sub(p1));
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point.
    pub s: f64,
    /// Signed lateral offset, positive to the left of the travel direction.
    pub d: f64,
    /// Direction of the polyline at the foot point.
    pub heading: f64,
    pub segment: usize,
}

/// Polyline with cumulative arc lengths, used for routes and lane queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<Point2>,
    pub cum_len: Vec<f64>,
}

impl Polyline {
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Invariant("polyline needs at least 2 points".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("polyline"));
        }
        let mut cum_len = Vec::with_capacity(points.len());
        cum_len.push(0.0);
        for w in points.windows(2) {
            let last = *cum_len.last().unwrap();
            cum_len.push(last + w[0].dist(&w[1]));
        }
        Ok(Self { points, cum_len })
    }

    pub fn length(&self) -> f64 {
        *self.cum_len.last().unwrap()
    }

    fn segment_heading(&self, i: usize) -> f64 {
        let d = self.points[i + 1].sub(&self.points[i]);
        d.y.atan2(d.x)
    }

    pub fn project(&self, p: &Point2) -> Projection {
        let mut best = Projection { s: 0.0, d: f64::INFINITY, heading: 0.0, segment: 0 };
        let mut best_abs = f64::INFINITY;
        for i in 0..self.points.len() - 1 {
            let a = self.points[i];
            let b = self.points[i + 1];
            let ab = b.sub(&a);
            let len2 = ab.dot(&ab);
            if len2 == 0.0 {
                continue;
            }
            let t = (p.sub(&a).dot(&ab) / len2).clamp(0.0, 1.0);
            let foot = a.add(&ab.scale(t));
            let dist = p.dist(&foot);
            if dist < best_abs {
                best_abs = dist;
                let side = ab.cross(&p.sub(&a)).signum();
                best = Projection {
                    s: self.cum_len[i] + t * len2.sqrt(),
                    d: if side == 0.0 { 0.0 } else { side * dist },
                    heading: self.segment_heading(i),
                    segment: i,
                };
            }
        }
        best
    }

    /// Point and heading at arc length `s`, extrapolating linearly past either end.
    pub fn point_at(&self, s: f64) -> (Point2, f64) {
        let n = self.points.len();
        // Arc lengths within SNAP of a vertex resolve to the segment that starts
        // there, so rigidly moved copies of a line agree on the heading.
        let key = s + SNAP;
        let i = match self.cum_len.binary_search_by(|c| c.partial_cmp(&key).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        };
        let a = self.points[i];
        let b = self.points[i + 1];
        let seg_len = self.cum_len[i + 1] - self.cum_len[i];
        let heading = self.segment_heading(i);
        if seg_len == 0.0 {
            return (a, heading);
        }
        let t = (s - self.cum_len[i]) / seg_len;
        (a.add(&b.sub(&a).scale(t)), heading)
    }

    /// Converts route coordinates into a world point.
    pub fn frenet_to_world(&self, s: f64, d: f64) -> (Point2, f64) {
        let (p, h) = self.point_at(s);
        let normal = Point2::new(-h.sin(), h.cos());
        (p.add(&normal.scale(d)), h)
    }

    /// Points spaced `spacing` apart along the polyline, each with its local direction.
    pub fn resample(&self, spacing: f64) -> Vec<(Point2, f64)> {
        let len = self.length();
        let n = (len / spacing + SNAP).floor() as usize;
        (0..=n).map(|k| self.point_at((k as f64 * spacing).min(len))).collect()
    }
}

/// Arc-length tolerance for vertex and sample-count decisions.
const SNAP: f64 = 1e-9;

/// Minimum distance from a point to a polyline.
pub fn distance_to_polyline(p: &Point2, line: &[Point2]) -> f64 {
    line.windows(2).map(|w| point_segment_distance(p, &w[0], &w[1])).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles_wrap_into_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-0.5) + 0.5).abs() < 1e-15);
        for k in -20..20 {
            let a = normalize_angle(k as f64 * 0.77);
            assert!(a > -PI && a <= PI);
        }
    }

    #[test]
    fn compose_and_relative_are_inverse() {
        let a = Pose2::new(3.0, -2.0, 0.7);
        let b = Pose2::new(-1.0, 5.0, -2.9);
        let rel = a.relative(&b);
        let back = a.compose(&rel);
        assert!((back.x - b.x).abs() < 1e-12);
        assert!((back.y - b.y).abs() < 1e-12);
        assert!(normalize_angle(back.heading - b.heading).abs() < 1e-12);
    }

    #[test]
    fn point_in_square_and_on_edge() {
        let sq = [Point2::new(0.0, 0.0), Point2::new(10.0, 0.0), Point2::new(10.0, 10.0), Point2::new(0.0, 10.0)];
        assert!(point_in_polygon(&Point2::new(5.0, 5.0), &sq));
        assert!(point_in_polygon(&Point2::new(10.0, 3.0), &sq));
        assert!(point_in_polygon(&Point2::new(0.0, 0.0), &sq));
        assert!(!point_in_polygon(&Point2::new(10.0001, 3.0), &sq));
        assert!(polygon_is_simple(&sq));
        let bowtie = [Point2::new(0.0, 0.0), Point2::new(10.0, 10.0), Point2::new(10.0, 0.0), Point2::new(0.0, 10.0)];
        assert!(!polygon_is_simple(&bowtie));
    }

    #[test]
    fn polyline_projection_signs() {
        let line = Polyline::new(vec![Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)]).unwrap();
        let left = line.project(&Point2::new(4.0, 2.0));
        assert!((left.s - 4.0).abs() < 1e-12 && (left.d - 2.0).abs() < 1e-12);
        let right = line.project(&Point2::new(4.0, -1.5));
        assert!((right.d + 1.5).abs() < 1e-12);
        let (p, _) = line.frenet_to_world(7.0, -1.0);
        assert!((p.x - 7.0).abs() < 1e-12 && (p.y + 1.0).abs() < 1e-12);
        let (q, _) = line.point_at(12.0);
        assert!((q.x - 12.0).abs() < 1e-12);
    }

    #[test]
    fn resampling_survives_rigid_motion() {
        let pts = vec![Point2::new(0.0, 0.0), Point2::new(20.0, 0.0), Point2::new(20.0, 20.0)];
        let base = Polyline::new(pts.clone()).unwrap().resample(4.0);
        assert_eq!(base.len(), 11);
        for k in 0..50 {
            let rot = -3.0 + 0.12 * k as f64;
            let moved: Vec<Point2> =
                pts.iter().map(|p| rotate_point(p, rot).add(&Point2::new(731.3, -412.9))).collect();
            let samples = Polyline::new(moved).unwrap().resample(4.0);
            assert_eq!(samples.len(), base.len());
            for ((_, h0), (_, h1)) in base.iter().zip(&samples) {
                assert!(normalize_angle(h1 - h0 - rot).abs() < 1e-9);
            }
        }
    }
}
