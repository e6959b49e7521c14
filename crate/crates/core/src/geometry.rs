//! Small planar geometry helpers shared across modules.

use crate::model::{Point, Vector};

pub fn cross(a: &Vector, b: &Vector) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Proper or touching intersection of segments `ab` and `cd`.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(&(b - a), &(c - a));
    let d2 = cross(&(b - a), &(d - a));
    let d3 = cross(&(d - c), &(a - c));
    let d4 = cross(&(d - c), &(b - c));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Point, q: Point, r: Point| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    (d1 == 0.0 && on(a, b, c))
        || (d2 == 0.0 && on(a, b, d))
        || (d3 == 0.0 && on(c, d, a))
        || (d4 == 0.0 && on(c, d, b))
}

/// Closest point on segment `ab` to `p`, with its segment parameter in [0,1].
pub fn project_on_segment(p: &Point, a: &Point, b: &Point) -> (Point, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (*a, 0.0);
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolylineProjection {
    pub point: Point,
    pub distance: f64,
    /// Index of the segment start vertex.
    pub segment: usize,
    /// Arc length from the first vertex to the projection.
    pub arc: f64,
}

/// Closest point on an open polyline (or closed when `closed`).
pub fn project_on_polyline(p: &Point, pts: &[Point], closed: bool) -> Option<PolylineProjection> {
    match pts.len() {
        0 => return None,
        1 => {
            return Some(PolylineProjection {
                point: pts[0],
                distance: (p - pts[0]).norm(),
                segment: 0,
                arc: 0.0,
            })
        }
        _ => {}
    }
    let nseg = if closed { pts.len() } else { pts.len() - 1 };
    let mut best: Option<PolylineProjection> = None;
    let mut arc = 0.0;
    for i in 0..nseg {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        let (q, t) = project_on_segment(p, &a, &b);
        let d = (p - q).norm();
        if best.is_none_or(|bp| d < bp.distance) {
            best = Some(PolylineProjection {
                point: q,
                distance: d,
                segment: i,
                arc: arc + t * (b - a).norm(),
            });
        }
        arc += (b - a).norm();
    }
    best
}

pub fn polyline_length(pts: &[Point], closed: bool) -> f64 {
    let mut len: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    if closed && pts.len() > 1 {
        len += (pts[0] - pts[pts.len() - 1]).norm();
    }
    len
}

pub fn midpoint(a: &Point, b: &Point) -> Point {
    Point::from((a.coords + b.coords) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_segments() {
        let p = Point::new;
        assert!(segments_intersect(p(0., 0.), p(1., 1.), p(0., 1.), p(1., 0.)));
        assert!(!segments_intersect(p(0., 0.), p(1., 0.), p(0., 1.), p(1., 1.)));
        assert!(segments_intersect(p(0., 0.), p(1., 0.), p(1., 0.), p(2., 5.)));
    }

    #[test]
    fn polyline_projection() {
        let pts = [Point::new(0., 0.), Point::new(0., 10.), Point::new(10., 10.)];
        let pr = project_on_polyline(&Point::new(1., 5.), &pts, false).unwrap();
        assert_eq!(pr.segment, 0);
        assert!((pr.distance - 1.0).abs() < 1e-12);
        assert!((pr.arc - 5.0).abs() < 1e-12);
        let pr = project_on_polyline(&Point::new(5., 11.), &pts, false).unwrap();
        assert!((pr.arc - 15.0).abs() < 1e-12);
        assert!((polyline_length(&pts, true) - (20.0 + 200f64.sqrt())).abs() < 1e-12);
    }
}
