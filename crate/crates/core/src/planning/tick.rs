//! Per-tick planning from the cone map.

use crate::geometry::polyline_length;
use crate::mapping::GlobalMap;
use crate::model::{ConeColor, Point, Pose2D, VehicleParams};

use super::{build_plan, midline, Pairing, PathPlan, PlanMode, Spline2D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerParams {
    pub vehicle: VehicleParams,
    /// Speed cap while the map is incomplete.
    pub discovery_speed: f64,
    /// Boundary cones ahead of the vehicle used by a discovery plan.
    pub window_cones: usize,
    /// Spacing of the boundary samples paired into transverse lines.
    pub sample_spacing: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            discovery_speed: 5.0,
            window_cones: 8,
            sample_spacing: 0.5,
        }
    }
}

const LAUNCH_RUNOUT: f64 = 4.0;

/// Cones from one behind the nearest to `window` ahead, wrapping on a
/// closed boundary.
fn window(points: &[Point], closed: bool, p: &Point, window: usize) -> (Vec<Point>, usize) {
    let nearest = points
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - p).norm().total_cmp(&(b.1 - p).norm()))
        .map_or(0, |(i, _)| i);
    let n = points.len();
    if closed {
        let start = (nearest + n - 1) % n;
        let take = (window + 2).min(n + 1);
        ((0..take).map(|k| points[(start + k) % n]).collect(), start)
    } else {
        let start = nearest.saturating_sub(1);
        let end = (start + window + 2).min(n);
        (points[start..end].to_vec(), start)
    }
}

fn sample_count(sp: &Spline2D, spacing: f64) -> usize {
    ((sp.arc_length() / spacing).ceil() as usize).max(2)
}

fn discovery(map: &GlobalMap, pose: &Pose2D, params: &PlannerParams) -> PathPlan {
    let left = map.boundary(ConeColor::Blue);
    let right = map.boundary(ConeColor::Yellow);
    let p = pose.position();
    let vehicle = VehicleParams {
        v_max: params.discovery_speed.min(params.vehicle.v_max),
        ..params.vehicle
    };
    if left.len() < 2 || right.len() < 2 {
        return launch(map, &p, &vehicle);
    }
    let (lw, l0) = window(&left, map.left_closed, &p, params.window_cones);
    let (rw, _) = window(&right, map.right_closed, &p, params.window_cones);
    let (Ok(ls), Ok(rs)) = (Spline2D::fit(&lw, false), Spline2D::fit(&rw, false)) else {
        return PathPlan::empty(PlanMode::Discovery);
    };
    let mut mid = midline(&ls, &rs, sample_count(&ls, params.sample_spacing), Pairing::Nearest);
    if mid.len() < 2 {
        return PathPlan::empty(PlanMode::Discovery);
    }
    // still behind the start line: extend the plan back past the vehicle
    if l0 == 0 {
        if let (Some(dir), Some(first)) = (map.start_direction, mid.first().copied()) {
            let behind = (p - first).dot(&dir);
            if behind < -2.0 {
                mid.insert(0, first + dir * (behind - 1.0));
            }
        }
    }
    build_plan(&mid, &vehicle, PlanMode::Discovery, false, true)
}

/// Only the start line is mapped: creep through its midpoint and stop
/// `LAUNCH_RUNOUT` meters past it unless more cones show up.
fn launch(map: &GlobalMap, p: &Point, vehicle: &VehicleParams) -> PathPlan {
    let (Some((l, r)), Some(dir)) = (map.start_pair, map.start_direction) else {
        return PathPlan::empty(PlanMode::Discovery);
    };
    let mid = crate::geometry::midpoint(&map.cones[l].position, &map.cones[r].position);
    let end = mid + dir * LAUNCH_RUNOUT;
    if (end - p).dot(&dir) < 1.0 {
        return PathPlan::empty(PlanMode::Discovery);
    }
    let start = Point::from(mid - dir * ((mid - p).dot(&dir) + 1.0).max(1.0));
    build_plan(&[start, mid, end], vehicle, PlanMode::Discovery, false, true)
}

/// Closed racing line over the full ordered map, or `None` while either
/// boundary is still open.
pub fn global_plan(map: &GlobalMap, params: &PlannerParams) -> Option<PathPlan> {
    if !(map.left_closed && map.right_closed) {
        return None;
    }
    let left = map.boundary(ConeColor::Blue);
    let right = map.boundary(ConeColor::Yellow);
    let ls = Spline2D::fit(&left, true).ok()?;
    let rs = Spline2D::fit(&right, true).ok()?;
    let mid = midline(&ls, &rs, sample_count(&ls, params.sample_spacing), Pairing::Nearest);
    let plan = build_plan(&mid, &params.vehicle, PlanMode::Global, true, false);
    (!plan.is_empty()).then_some(plan)
}

/// Discovery plans cover only what has been mapped ahead and come to rest
/// at their end; global plans loop over the whole map.
pub fn plan_tick(map: &GlobalMap, pose: &Pose2D, mode: PlanMode, params: &PlannerParams) -> PathPlan {
    match mode {
        PlanMode::Global => global_plan(map, params).unwrap_or_else(|| discovery(map, pose, params)),
        PlanMode::Discovery => discovery(map, pose, params),
    }
}

/// Length of a plan's polyline.
pub fn plan_length(plan: &PathPlan) -> f64 {
    polyline_length(&plan.points(), false)
}
