//! Paths derived from a known track layout: mission templates for the
//! known-map missions and the ground-truth midline used for evaluation.

use std::f64::consts::PI;

use crate::model::{ConeColor, MissionKind, Point, TrackDefinition};
use crate::trackgen::SKIDPAD_RADIUS;

use super::{midline, Pairing, Spline2D};

/// Straight-line stopping room past the acceleration finish line.
pub const ACCELERATION_RUNOUT: f64 = 30.0;

/// Straight exit length after the last skidpad loop.
pub const SKIDPAD_EXIT: f64 = 15.0;

fn sample_segment(a: Point, b: Point, spacing: f64, out: &mut Vec<Point>) {
    let n = ((b - a).norm() / spacing).ceil().max(1.0) as usize;
    for i in 1..=n {
        out.push(a + (b - a) * (i as f64 / n as f64));
    }
}

/// Staging point, start line, finish line and runout, in track coordinates.
pub fn acceleration_path(track: &TrackDefinition, staging_offset: f64) -> Vec<Point> {
    let dir = track.direction_hint;
    let start = track.start_midpoint();
    let finish = track
        .finish_line()
        .map(|(l, r)| Point::from((track.cone(l).position.coords + track.cone(r).position.coords) * 0.5))
        .unwrap_or(start + dir * 75.0);
    let mut pts = vec![start - dir * staging_offset];
    sample_segment(pts[0], finish, 1.0, &mut pts);
    sample_segment(finish, finish + dir * ACCELERATION_RUNOUT, 1.0, &mut pts);
    pts
}

/// Entry, two clockwise right loops, two counterclockwise left loops and
/// the exit, sampled every `spacing` meters. The layout is centered on the
/// start midpoint with circles of the standard radius.
pub fn skidpad_path(track: &TrackDefinition, staging_offset: f64, spacing: f64) -> Vec<Point> {
    let dir = track.direction_hint;
    let right = crate::model::Vector::new(dir.y, -dir.x);
    let o = track.start_midpoint();
    let r = SKIDPAD_RADIUS;
    let mut pts = vec![o - dir * staging_offset];
    sample_segment(pts[0], o, spacing, &mut pts);
    let per_loop = ((2.0 * PI * r) / spacing).ceil() as usize;
    for (side, sign) in [(right, -1.0), (-right, 1.0)] {
        let center = o + side * r;
        // start angle points from the center back to the origin
        let rel = o - center;
        for k in 1..=2 * per_loop {
            let a = sign * 2.0 * PI * k as f64 / per_loop as f64;
            let (s, c) = a.sin_cos();
            pts.push(center + crate::model::Vector::new(c * rel.x - s * rel.y, s * rel.x + c * rel.y));
        }
    }
    let last = *pts.last().unwrap();
    sample_segment(last, last + dir * SKIDPAD_EXIT, spacing, &mut pts);
    pts
}

/// Dense midline of a track layout and whether it is closed.
pub fn truth_midline(track: &TrackDefinition, kind: MissionKind, staging_offset: f64) -> (Vec<Point>, bool) {
    match kind {
        MissionKind::Acceleration => (acceleration_path(track, staging_offset), false),
        MissionKind::Skidpad => (skidpad_path(track, staging_offset, 0.25), false),
        MissionKind::Trackdrive => {
            let (l, r) = track.start_line;
            let side = |seed: usize, color: ConeColor| {
                let mut v = vec![track.cone(seed).position];
                v.extend(track.side(color).iter().map(|c| c.position));
                v
            };
            let left = side(l, ConeColor::Blue);
            let right = side(r, ConeColor::Yellow);
            match (Spline2D::fit(&left, true), Spline2D::fit(&right, true)) {
                (Ok(ls), Ok(rs)) => {
                    let n = (ls.arc_length() / 0.25).ceil() as usize;
                    (midline(&ls, &rs, n, Pairing::Nearest), true)
                }
                _ => (Vec::new(), true),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project_on_polyline;
    use crate::trackgen::{generate_track, TrackGenParams};

    #[test]
    fn acceleration_path_is_straight() {
        let t = generate_track(0, MissionKind::Acceleration, &TrackGenParams::for_kind(MissionKind::Acceleration)).unwrap();
        let p = acceleration_path(&t, 6.0);
        assert_eq!(p[0], Point::new(0.0, -6.0));
        assert!(p.iter().all(|q| q.x.abs() < 1e-12));
        assert!((p.last().unwrap().y - 105.0).abs() < 1e-9);
    }

    #[test]
    fn skidpad_loops_pass_through_center() {
        let t = generate_track(0, MissionKind::Skidpad, &TrackGenParams::default()).unwrap();
        let p = skidpad_path(&t, 6.0, 0.5);
        let near_center = p.iter().filter(|q| q.coords.norm() < 0.3).count();
        assert!(near_center >= 5);
        // first loop goes right (positive x)
        let after_entry = p.iter().find(|q| q.y > 0.5).unwrap();
        assert!(after_entry.x > 0.0);
    }

    #[test]
    fn trackdrive_midline_between_cone_pairs() {
        let t = generate_track(5, MissionKind::Trackdrive, &TrackGenParams::default()).unwrap();
        let (mid, closed) = truth_midline(&t, MissionKind::Trackdrive, 6.0);
        assert!(closed);
        let blue = t.side(ConeColor::Blue);
        let yellow = t.side(ConeColor::Yellow);
        for (b, y) in blue.iter().zip(&yellow) {
            let m = Point::from((b.position.coords + y.position.coords) * 0.5);
            assert!(project_on_polyline(&m, &mid, true).unwrap().distance < 0.1);
        }
    }
}
