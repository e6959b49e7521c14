//! Racing line from the two boundaries plus a feasible speed profile.

pub mod reference;
pub mod spline;
pub mod tick;

use crate::geometry::{midpoint, project_on_polyline};
use crate::model::{Point, VehicleParams};

pub use spline::{Spline2D, SplineError};
pub use tick::{global_plan, plan_tick, PlannerParams};

/// Nominal waypoint spacing in meters.
pub const WAYPOINT_SPACING: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    Discovery,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub position: Point,
    pub target_speed: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPlan {
    pub waypoints: Vec<Waypoint>,
    pub mode: PlanMode,
    /// Closed plans repeat the first waypoint at the end.
    pub closed: bool,
}

impl PathPlan {
    pub fn empty(mode: PlanMode) -> Self {
        Self {
            waypoints: Vec::new(),
            mode,
            closed: false,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn points(&self) -> Vec<Point> {
        self.waypoints.iter().map(|w| w.position).collect()
    }

    /// `x,y,v,kappa` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,v,kappa\n");
        for w in &self.waypoints {
            s.push_str(&format!("{},{},{},{}\n", w.position.x, w.position.y, w.target_speed, w.curvature));
        }
        s
    }
}

/// How boundary samples are paired into transverse lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pairing {
    /// i-th sample on each side at equal arc-length fractions.
    #[default]
    ArcFraction,
    /// Each left sample with its nearest point on the right boundary.
    Nearest,
}

/// Midpoints of transverse lines between the two boundary splines.
pub fn midline(left: &Spline2D, right: &Spline2D, n_samples: usize, pairing: Pairing) -> Vec<Point> {
    let ls = left.sample_uniform(n_samples);
    match pairing {
        Pairing::ArcFraction => {
            let rs = right.sample_uniform(n_samples);
            ls.iter().zip(&rs).map(|(a, b)| midpoint(a, b)).collect()
        }
        Pairing::Nearest => {
            let dense = right.sample_uniform((right.arc_length() / 0.1).ceil().max(2.0) as usize);
            let last = dense.len() - 1;
            ls.iter()
                .filter_map(|a| {
                    let pr = project_on_polyline(a, &dense, right.closed).expect("non-empty");
                    // on an open boundary, a projection clamped to an end
                    // is not a transverse line
                    if !right.closed {
                        for (end, next) in [(0, 1), (last, last - 1)] {
                            if (pr.point - dense[end]).norm() < 1e-9 {
                                let tangent = (dense[next] - dense[end]).normalize();
                                if (a - dense[end]).dot(&tangent).abs() > 0.05 {
                                    return None;
                                }
                            }
                        }
                    }
                    Some(midpoint(a, &pr.point))
                })
                .collect()
        }
    }
}

/// Drops points within `eps` of their predecessor (and, when closed, of
/// the first point).
fn dedup(points: &[Point], closed: bool, eps: f64) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(points.len());
    for p in points {
        if out.last().is_none_or(|q| (p - q).norm() > eps) {
            out.push(*p);
        }
    }
    if closed {
        while out.len() > 1 && (out[out.len() - 1] - out[0]).norm() <= eps {
            out.pop();
        }
    }
    out
}

/// Speed caps from lateral acceleration and steering rate, followed by the
/// backward (braking) and forward (traction) passes.
pub fn speed_profile(curvature: &[f64], spacing: &[f64], params: &VehicleParams, closed: bool, end_speed: Option<f64>) -> Vec<f64> {
    let n = curvature.len();
    let mut v: Vec<f64> = curvature
        .iter()
        .map(|k| {
            let lat = if k.abs() > 1e-12 {
                (params.a_lat_max / k.abs()).sqrt()
            } else {
                f64::INFINITY
            };
            params.v_max.min(lat)
        })
        .collect();
    // steering-rate bound with delta(s) = atan(l kappa)
    let delta: Vec<f64> = curvature.iter().map(|k| (params.wheelbase * k).atan()).collect();
    for i in 0..n {
        let (j0, j1) = if closed {
            ((i + n - 1) % n, (i + 1) % n)
        } else {
            (i.saturating_sub(1), (i + 1).min(n - 1))
        };
        let mut ds = 0.0;
        let mut k = j0;
        while k != j1 && n > 1 {
            ds += spacing[k];
            k = (k + 1) % n;
        }
        if ds <= 0.0 {
            continue;
        }
        let rate = ((delta[j1] - delta[j0]) / ds).abs();
        v[i] = v[i].min(params.max_steer_rate / rate.max(1e-6));
    }
    if let Some(e) = end_speed {
        if let Some(last) = v.last_mut() {
            *last = last.min(e);
        }
    }
    let a = params.a_long_max;
    let passes = if closed { 2 } else { 1 };
    for _ in 0..passes {
        for step in (0..n - usize::from(!closed)).rev() {
            let i = step % n;
            let j = (step + 1) % n;
            v[i] = v[i].min((v[j] * v[j] + 2.0 * a * spacing[i]).sqrt());
        }
    }
    for _ in 0..passes {
        for step in 0..n - usize::from(!closed) {
            let i = step % n;
            let j = (step + 1) % n;
            v[j] = v[j].min((v[i] * v[i] + 2.0 * a * spacing[i]).sqrt());
        }
    }
    v
}

/// Re-interpolates the midline and discretizes it at about 1 m. Open plans
/// come to rest at their last waypoint when `stop_at_end` is set.
pub fn build_plan(mid: &[Point], params: &VehicleParams, mode: PlanMode, closed: bool, stop_at_end: bool) -> PathPlan {
    let pts = dedup(mid, closed, 1e-6);
    let closed = closed && pts.len() >= 3;
    if pts.len() < 2 {
        return PathPlan::empty(mode);
    }
    let Ok(sp) = Spline2D::fit(&pts, closed) else {
        return PathPlan::empty(mode);
    };
    let total = sp.arc_length();
    let nseg = (total / WAYPOINT_SPACING).round().max(1.0) as usize;
    let ds = total / nseg as f64;
    let count = if closed { nseg } else { nseg + 1 };
    let mut positions = Vec::with_capacity(count);
    let mut curvature = Vec::with_capacity(count);
    for i in 0..count {
        let s = sp.param_at_arc(ds * i as f64);
        positions.push(sp.eval(s));
        curvature.push(sp.curvature(s));
    }
    let spacing: Vec<f64> = (0..count)
        .map(|i| {
            if closed || i + 1 < count {
                (positions[(i + 1) % count] - positions[i]).norm()
            } else {
                0.0
            }
        })
        .collect();
    let speeds = speed_profile(&curvature, &spacing, params, closed, stop_at_end.then_some(0.0));
    let mut waypoints: Vec<Waypoint> = (0..count)
        .map(|i| Waypoint {
            position: positions[i],
            target_speed: speeds[i].clamp(0.0, params.v_max),
            curvature: curvature[i],
        })
        .collect();
    if closed {
        waypoints.push(waypoints[0]);
    }
    PathPlan {
        waypoints,
        mode,
        closed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle(r: f64, n: usize) -> Vec<Point> {
        (0..n)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / n as f64;
                Point::new(r * a.cos(), r * a.sin())
            })
            .collect()
    }

    #[test]
    fn parallel_lines_midline() {
        let l = Spline2D::fit(&[Point::new(-1.5, 0.0), Point::new(-1.5, 5.0), Point::new(-1.5, 20.0)], false).unwrap();
        let r = Spline2D::fit(&[Point::new(1.5, 0.0), Point::new(1.5, 10.0), Point::new(1.5, 20.0)], false).unwrap();
        for pairing in [Pairing::ArcFraction, Pairing::Nearest] {
            for p in midline(&l, &r, 21, pairing) {
                assert!(p.x.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn concentric_circles_midline() {
        let l = Spline2D::fit(&circle(9.0, 16), true).unwrap();
        let r = Spline2D::fit(&circle(12.0, 16), true).unwrap();
        for pairing in [Pairing::ArcFraction, Pairing::Nearest] {
            for p in midline(&l, &r, 40, pairing) {
                assert!((p.coords.norm() - 10.5).abs() / 10.5 < 0.01);
            }
        }
    }

    #[test]
    fn identical_sides_give_the_side() {
        let pts = [Point::new(0.0, 0.0), Point::new(2.0, 5.0), Point::new(1.0, 9.0)];
        let sp = Spline2D::fit(&pts, false).unwrap();
        let mid = midline(&sp, &sp, 10, Pairing::ArcFraction);
        for (m, s) in mid.iter().zip(sp.sample_uniform(10)) {
            assert!((m - s).norm() < 1e-12);
        }
    }

    #[test]
    fn straight_plan_runs_at_v_max() {
        let p = VehicleParams::default();
        let plan = build_plan(&[Point::new(0.0, 0.0), Point::new(0.0, 30.0)], &p, PlanMode::Global, false, false);
        assert_eq!(plan.waypoints.len(), 31);
        assert!(plan.waypoints.iter().all(|w| (w.target_speed - p.v_max).abs() < 1e-12));
    }

    #[test]
    fn constant_curvature_cruise_speed() {
        let p = VehicleParams::default();
        let plan = build_plan(&circle(10.0, 24), &p, PlanMode::Global, true, false);
        for w in &plan.waypoints {
            assert!((w.curvature.abs() - 0.1).abs() < 0.002);
            assert!((w.target_speed - 50f64.sqrt()).abs() < 0.08, "{}", w.target_speed);
        }
        assert_eq!(plan.waypoints.first().unwrap().position, plan.waypoints.last().unwrap().position);
    }

    #[test]
    fn profile_respects_longitudinal_limit() {
        let p = VehicleParams::default();
        let pts: Vec<Point> = (0..40)
            .map(|i| {
                let s = i as f64 * 2.0;
                Point::new(6.0 * (s / 9.0).sin(), s)
            })
            .collect();
        let plan = build_plan(&pts, &p, PlanMode::Discovery, false, true);
        assert_eq!(plan.waypoints.last().unwrap().target_speed, 0.0);
        for w in plan.waypoints.windows(2) {
            let ds = (w[1].position - w[0].position).norm();
            assert!((0.25..=2.0).contains(&ds));
            let dv2 = (w[1].target_speed.powi(2) - w[0].target_speed.powi(2)).abs();
            assert!(dv2 / (2.0 * ds) <= p.a_long_max + 1e-6);
        }
        let kmax = plan.waypoints.iter().map(|w| w.curvature.abs()).fold(0.0, f64::max);
        let sharp = plan.waypoints.iter().find(|w| w.curvature.abs() == kmax).unwrap();
        assert!(sharp.target_speed <= (p.a_lat_max / kmax).sqrt() + 1e-6);
    }

    #[test]
    fn build_plan_is_pure() {
        let p = VehicleParams::default();
        let pts = circle(15.0, 11);
        assert_eq!(
            build_plan(&pts, &p, PlanMode::Global, true, false),
            build_plan(&pts, &p, PlanMode::Global, true, false)
        );
    }
}
