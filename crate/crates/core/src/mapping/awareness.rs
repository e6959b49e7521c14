//! Lap counting, finish detection and track-limit checks.

use crate::geometry::{cross, project_on_polyline, segments_intersect};
use crate::model::{ConeColor, MissionKind, Point, Pose2D};

use super::GlobalMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LapType {
    #[default]
    Recon,
    Timed,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AwarenessState {
    pub lap_count: u32,
    pub lap_type: LapType,
    pub finish_reached: bool,
    pub near_finish: bool,
    pub off_track: bool,
    pub skidpad_center_crossings: u32,
    /// Lateral distance from the local midline, when it could be computed.
    pub lateral: Option<f64>,
    prev_position: Option<Point>,
    in_center: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AwarenessParams {
    pub mission: MissionKind,
    /// Laps after the first crossing; the run finishes on crossing number
    /// `laps + 1`.
    pub laps: u32,
    pub near_finish_distance: f64,
    /// Added to the half width before flagging off-track (cone radius).
    pub off_track_margin: f64,
    /// Skidpad central section, map frame.
    pub skidpad_center: Option<(Point, f64)>,
    /// Separate finish line (map frame) for missions that have one.
    pub finish_line: Option<(Point, Point)>,
    /// Center passes that end a skidpad run.
    pub skidpad_passes: u32,
}

impl AwarenessParams {
    pub fn new(mission: MissionKind, laps: u32) -> Self {
        Self {
            mission,
            laps,
            near_finish_distance: 10.0,
            off_track_margin: 0.15,
            skidpad_center: None,
            finish_line: None,
            skidpad_passes: 5,
        }
    }
}

/// Forward crossing of segment `ab` (extended by `ext` meters on each end)
/// by the motion `p0 -> p1`; forward means along `forward`.
fn crosses(p0: &Point, p1: &Point, a: &Point, b: &Point, ext: f64, forward: &crate::model::Vector) -> bool {
    let ab = b - a;
    let n = ab.norm();
    if n < 1e-9 {
        return false;
    }
    let u = ab / n;
    let (a, b) = (a - u * ext, b + u * ext);
    (p1 - p0).dot(forward) > 0.0 && segments_intersect(*p0, *p1, a, b) && {
        // count a touch only once: require the end point strictly past
        let s1 = cross(&(b - a), &(p1 - a));
        let s0 = cross(&(b - a), &(p0 - a));
        s0 != 0.0 && (s1 == 0.0 || s1.signum() != s0.signum())
    }
}

fn segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    crate::geometry::project_on_segment(p, a, b).0.coords.metric_distance(&p.coords)
}

/// Lateral offset from the local midline and the local half width, when
/// the pose projects onto the interior of both boundaries.
pub fn midline_offset(pose: &Point, left: &[Point], right: &[Point], closed: bool) -> Option<(f64, f64)> {
    if left.len() < 2 || right.len() < 2 {
        return None;
    }
    let pl = project_on_polyline(pose, left, closed)?;
    let pr = project_on_polyline(pose, right, closed)?;
    if !closed {
        let at_end = |pr: &crate::geometry::PolylineProjection, pts: &[Point]| {
            (pr.point - pts[0]).norm() < 1e-9 || (pr.point - pts[pts.len() - 1]).norm() < 1e-9
        };
        if at_end(&pl, left) || at_end(&pr, right) {
            return None;
        }
    }
    let across = pr.point - pl.point;
    let width = across.norm();
    if width < 1e-6 {
        return None;
    }
    let mid = crate::geometry::midpoint(&pl.point, &pr.point);
    let lateral = ((pose - mid).dot(&across) / width).abs();
    Some((lateral, 0.5 * width))
}

/// Updates the flags from a map-frame pose.
pub fn awareness_update(state: &AwarenessState, pose: &Pose2D, map: &GlobalMap, params: &AwarenessParams) -> AwarenessState {
    let mut s = *state;
    let p = pose.position();
    let prev = state.prev_position.unwrap_or(p);
    let forward = map.start_direction.unwrap_or(pose.forward());

    let start = map.start_pair.map(|(l, r)| (map.cones[l].position, map.cones[r].position));
    if let Some((a, b)) = start {
        if crosses(&prev, &p, &a, &b, 1.0, &forward) && params.mission != MissionKind::Skidpad {
            s.lap_count += 1;
        }
    }
    s.lap_type = if s.lap_count <= 1 { LapType::Recon } else { LapType::Timed };

    let finish = match params.mission {
        MissionKind::Acceleration => params.finish_line,
        MissionKind::Skidpad => None,
        _ => start,
    };
    match params.mission {
        MissionKind::Acceleration => {
            if let Some((a, b)) = finish {
                if crosses(&prev, &p, &a, &b, 1.0, &forward) {
                    s.finish_reached = true;
                }
            }
        }
        MissionKind::Skidpad => {
            if let Some((c, r)) = params.skidpad_center {
                let inside = (p - c).norm() <= r;
                if inside && !state.in_center {
                    s.skidpad_center_crossings += 1;
                }
                s.in_center = inside;
            }
            if s.skidpad_center_crossings >= params.skidpad_passes {
                s.finish_reached = true;
            }
        }
        _ => {
            if s.lap_count > params.laps {
                s.finish_reached = true;
            }
        }
    }
    s.near_finish = finish.is_some_and(|(a, b)| segment_distance(&p, &a, &b) <= params.near_finish_distance);

    s.lateral = None;
    if params.mission != MissionKind::Skidpad {
        let left = map.boundary(ConeColor::Blue);
        let right = map.boundary(ConeColor::Yellow);
        let closed = map.left_closed && map.right_closed;
        if let Some((lat, half)) = midline_offset(&p, &left, &right, closed) {
            s.lateral = Some(lat);
            s.off_track = lat > half + params.off_track_margin;
        } else {
            s.off_track = false;
        }
    }
    s.prev_position = Some(p);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_map() -> GlobalMap {
        let mut m = GlobalMap::default();
        m.set_origin(Pose2D::new(0.0, 0.0, 0.0)).unwrap();
        m.associate(Point::new(-1.5, 6.0), ConeColor::OrangeStart, Point::origin(), 6.0);
        m.associate(Point::new(1.5, 6.0), ConeColor::OrangeStart, Point::origin(), 6.0);
        m.start_pair = Some((0, 1));
        for i in 1..8 {
            let y = 6.0 + 5.0 * i as f64;
            let l = m.associate(Point::new(-1.5, y), ConeColor::Blue, Point::new(0.0, y - 5.0), 5.0);
            let r = m.associate(Point::new(1.5, y), ConeColor::Yellow, Point::new(0.0, y - 5.0), 5.0);
            m.ordered_left.push(l);
            m.ordered_right.push(r);
        }
        m
    }

    #[test]
    fn midline_pose_is_calm() {
        let m = straight_map();
        let params = AwarenessParams::new(MissionKind::Trackdrive, 2);
        let s = awareness_update(&AwarenessState::default(), &Pose2D::new(0.0, 25.0, 0.0), &m, &params);
        assert!(!s.off_track);
        assert!(!s.near_finish);
        assert_eq!(s.lateral, Some(0.0));
    }

    #[test]
    fn lateral_excursion_flags_off_track() {
        let m = straight_map();
        let params = AwarenessParams::new(MissionKind::Trackdrive, 2);
        let s = awareness_update(&AwarenessState::default(), &Pose2D::new(-2.1, 25.0, 0.0), &m, &params);
        assert!(s.off_track);
        let s = awareness_update(&AwarenessState::default(), &Pose2D::new(-1.6, 25.0, 0.0), &m, &params);
        assert!(!s.off_track);
    }

    #[test]
    fn crossings_count_laps() {
        let m = straight_map();
        let params = AwarenessParams::new(MissionKind::Trackdrive, 5);
        let mut s = AwarenessState::default();
        for lap in 0..2 {
            for y in [4.0, 5.5, 6.5, 8.0] {
                s = awareness_update(&s, &Pose2D::new(0.0, y, 0.0), &m, &params);
            }
            assert_eq!(s.lap_count, lap + 1);
            // teleport back behind the line, as if around a loop
            s.prev_position = None;
        }
        assert_eq!(s.lap_type, LapType::Timed);
    }

    #[test]
    fn backward_motion_does_not_count() {
        let m = straight_map();
        let params = AwarenessParams::new(MissionKind::Trackdrive, 5);
        let mut s = AwarenessState::default();
        for y in [8.0, 6.5, 5.5, 4.0] {
            s = awareness_update(&s, &Pose2D::new(0.0, y, 0.0), &m, &params);
        }
        assert_eq!(s.lap_count, 0);
    }

    #[test]
    fn finish_after_last_lap() {
        let m = straight_map();
        let params = AwarenessParams::new(MissionKind::Trackdrive, 1);
        let mut s = AwarenessState::default();
        for _ in 0..2 {
            s.prev_position = None;
            for y in [5.0, 7.0] {
                s = awareness_update(&s, &Pose2D::new(0.0, y, 0.0), &m, &params);
            }
        }
        assert!(s.finish_reached);
        assert!(s.near_finish);
    }

    #[test]
    fn skidpad_center_passes() {
        let m = straight_map();
        let mut params = AwarenessParams::new(MissionKind::Skidpad, 0);
        params.skidpad_center = Some((Point::new(0.0, 0.0), 2.0));
        let mut s = AwarenessState::default();
        for y in [-5.0, -1.0, 0.0, 1.0, 5.0, -1.0, 5.0] {
            s = awareness_update(&s, &Pose2D::new(0.0, y, 0.0), &m, &params);
        }
        assert_eq!(s.skidpad_center_crossings, 2);
        assert!(!s.finish_reached);
    }
}
