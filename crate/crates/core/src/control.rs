//! Regulated pure pursuit with proportional speed control.

use crate::model::{normalize_angle, vector_heading, Point, Pose2D, VehicleParams};
use crate::planning::PathPlan;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlCommand {
    /// Negative values request braking.
    pub accel: f64,
    pub steering: f64,
    /// Brake pedal fraction in [0, 1].
    pub brake: f64,
}

impl ControlCommand {
    pub fn full_brake(params: &VehicleParams) -> Self {
        Self {
            accel: -params.a_long_max,
            steering: 0.0,
            brake: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurePursuitParams {
    pub l_low: f64,
    pub l_high: f64,
    /// Wheelbase used in the steering law.
    pub wheelbase: f64,
    pub accel_gain: f64,
    /// Seconds multiplying the speed difference before clamping.
    pub time_gain: f64,
    /// Use the bound order exactly as printed, `max(min(l_low, e), l_high)`,
    /// which always yields `l_high`.
    pub literal_lookahead: bool,
}

impl Default for PurePursuitParams {
    fn default() -> Self {
        Self {
            l_low: 3.5,
            l_high: 7.0,
            wheelbase: VehicleParams::default().wheelbase,
            accel_gain: 0.5,
            time_gain: 1.0,
            literal_lookahead: false,
        }
    }
}

impl PurePursuitParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.l_low > 0.0 && self.l_low < self.l_high) {
            return Err("lookahead bounds must satisfy 0 < l_low < l_high".into());
        }
        if !(self.wheelbase > 0.0 && self.accel_gain > 0.0 && self.time_gain > 0.0) {
            return Err("wheelbase, accel_gain and time_gain must be positive".into());
        }
        Ok(())
    }
}

pub fn lookahead(target_speed: f64, speed: f64, params: &PurePursuitParams) -> f64 {
    let seed = (target_speed - speed).abs() * params.time_gain;
    if params.literal_lookahead {
        params.l_low.min(seed).max(params.l_high)
    } else {
        seed.clamp(params.l_low, params.l_high)
    }
}

/// Index of the waypoint closest to `p`.
pub fn nearest_waypoint(plan: &PathPlan, p: &Point) -> Option<usize> {
    plan.waypoints
        .iter()
        .enumerate()
        .map(|(i, w)| (i, (w.position - p).norm_squared()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

/// Closest waypoint among `hint..hint + window`, for paths that cross
/// themselves. Wraps on closed plans.
pub fn nearest_waypoint_after(plan: &PathPlan, p: &Point, hint: usize, window: usize) -> Option<usize> {
    let n = plan.waypoints.len();
    if n == 0 {
        return None;
    }
    let span = if plan.closed { n - 1 } else { n };
    let hint = hint.min(n - 1);
    (0..window.min(span).max(1))
        .map(|k| if plan.closed { (hint + k) % span.max(1) } else { (hint + k).min(n - 1) })
        .map(|i| (i, (plan.waypoints[i].position - p).norm_squared()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

/// Target point where a circle of radius `l` around the rear axle leaves
/// the plan, walking forward from the nearest waypoint. Returns the point
/// and the index of the segment it lies on.
pub fn find_target(pose: &Pose2D, plan: &PathPlan, l: f64) -> Option<(Point, usize)> {
    let start = nearest_waypoint(plan, &pose.position())?;
    find_target_from(pose, plan, l, start)
}

/// As [`find_target`], starting the walk at waypoint `start`.
pub fn find_target_from(pose: &Pose2D, plan: &PathPlan, l: f64, start: usize) -> Option<(Point, usize)> {
    let wps = &plan.waypoints;
    if wps.is_empty() {
        return None;
    }
    let n = wps.len();
    let start = start.min(n - 1);
    let c = pose.position();
    let nseg = if plan.closed { n - 1 } else { n.saturating_sub(1) - start };
    for k in 0..nseg {
        let i = if plan.closed { (start + k) % (n - 1) } else { start + k };
        let a = wps[i].position;
        let b = wps[i + 1].position;
        let d = b - a;
        let f = a - c;
        let qa = d.norm_squared();
        if qa == 0.0 {
            continue;
        }
        let qb = 2.0 * f.dot(&d);
        let qc = f.norm_squared() - l * l;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            continue;
        }
        let t = (-qb + disc.sqrt()) / (2.0 * qa);
        if (0.0..=1.0).contains(&t) {
            return Some((a + d * t, i));
        }
    }
    Some((wps[n - 1].position, n.saturating_sub(2)))
}

/// `delta = atan2(2 W sin(alpha), l)` with `alpha` the bearing to the
/// target relative to the heading.
pub fn steering(pose: &Pose2D, target: &Point, l: f64, wheelbase: f64, max_steer: f64) -> f64 {
    let t = vector_heading(&(target - pose.position()));
    let alpha = normalize_angle(t - pose.theta);
    (2.0 * wheelbase * alpha.sin()).atan2(l).clamp(-max_steer, max_steer)
}

pub fn speed_control(speed: f64, target_speed: f64, gain: f64, params: &VehicleParams) -> (f64, f64) {
    let accel = (gain * (target_speed - speed)).clamp(-params.a_long_max, params.a_long_max);
    let brake = if accel < 0.0 {
        (accel.abs() / params.a_long_max).min(1.0)
    } else {
        0.0
    };
    (accel, brake)
}

pub fn control_tick(
    pose: &Pose2D,
    speed: f64,
    plan: &PathPlan,
    pp: &PurePursuitParams,
    vehicle: &VehicleParams,
) -> ControlCommand {
    let Some(near) = nearest_waypoint(plan, &pose.position()) else {
        return ControlCommand::full_brake(vehicle);
    };
    control_tick_from(pose, speed, plan, near, pp, vehicle)
}

/// As [`control_tick`] with the nearest waypoint already known.
pub fn control_tick_from(
    pose: &Pose2D,
    speed: f64,
    plan: &PathPlan,
    near: usize,
    pp: &PurePursuitParams,
    vehicle: &VehicleParams,
) -> ControlCommand {
    if plan.is_empty() {
        return ControlCommand::full_brake(vehicle);
    }
    let near = near.min(plan.waypoints.len() - 1);
    let t_v = plan.waypoints[near].target_speed;
    let l = lookahead(t_v, speed, pp);
    let (target, seg) = find_target_from(pose, plan, l, near).expect("plan is non-empty");
    // look slightly ahead for the speed reference so braking starts in time
    let t_v = t_v.min(plan.waypoints[seg].target_speed);
    let delta = if (target - pose.position()).norm() < 1e-9 {
        0.0
    } else {
        steering(pose, &target, l, pp.wheelbase, vehicle.max_steer)
    };
    let (accel, brake) = speed_control(speed, t_v, pp.accel_gain, vehicle);
    ControlCommand {
        accel,
        steering: delta,
        brake,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planning::{PlanMode, Waypoint};
    use std::f64::consts::FRAC_PI_2;

    fn straight(len: usize, v: f64) -> PathPlan {
        PathPlan {
            waypoints: (0..=len)
                .map(|i| Waypoint {
                    position: Point::new(0.0, i as f64),
                    target_speed: v,
                    curvature: 0.0,
                })
                .collect(),
            mode: PlanMode::Global,
            closed: false,
        }
    }

    #[test]
    fn lookahead_clamps() {
        let p = PurePursuitParams {
            l_low: 3.0,
            l_high: 8.0,
            ..Default::default()
        };
        assert_eq!(lookahead(5.0, 4.0, &p), 3.0);
        assert_eq!(lookahead(20.0, 0.0, &p), 8.0);
        assert_eq!(lookahead(0.0, 5.0, &p), 5.0);
        let lit = PurePursuitParams { literal_lookahead: true, ..p };
        for e in [0.0, 5.0, 50.0] {
            assert_eq!(lookahead(e, 0.0, &lit), 8.0);
        }
    }

    #[test]
    fn target_on_straight_plan() {
        let plan = straight(20, 5.0);
        let (t, _) = find_target(&Pose2D::new(0.0, 0.0, 0.0), &plan, 5.0).unwrap();
        assert!((t - Point::new(0.0, 5.0)).norm() < 1e-12);
        let (t, _) = find_target(&Pose2D::new(0.0, 3.3, 0.0), &plan, 4.25).unwrap();
        assert!((t.y - 7.55).abs() < 1e-12);
    }

    #[test]
    fn target_falls_back_to_last_waypoint() {
        let plan = straight(3, 5.0);
        let (t, _) = find_target(&Pose2D::new(0.0, 0.0, 0.0), &plan, 10.0).unwrap();
        assert_eq!(t, Point::new(0.0, 3.0));
        assert!(find_target(&Pose2D::new(0.0, 0.0, 0.0), &PathPlan::empty(PlanMode::Global), 3.0).is_none());
    }

    #[test]
    fn steering_law() {
        let pose = Pose2D::new(0.0, 0.0, 0.0);
        assert_eq!(steering(&pose, &Point::new(0.0, 5.0), 5.0, 1.5, 10.0), 0.0);
        // target straight left: alpha = pi/2
        let d = steering(&pose, &Point::new(-5.0, 0.0), 5.0, 1.5, 10.0);
        assert!((d - 3f64.atan2(5.0)).abs() < 1e-12);
        assert!((d - 0.5404).abs() < 1e-4);
        let m = steering(&pose, &Point::new(5.0, 0.0), 5.0, 1.5, 10.0);
        assert_eq!(m, -d);
        let clamped = steering(&pose, &Point::new(-5.0, 0.0), 5.0, 1.5, 0.45);
        assert_eq!(clamped, 0.45);
        let _ = FRAC_PI_2;
    }

    #[test]
    fn steering_magnitude_falls_with_lookahead() {
        let pose = Pose2D::new(0.0, 0.0, 0.0);
        let target = Point::new(-1.0, 1.0);
        let mut prev = f64::INFINITY;
        for l in [1.0, 2.0, 4.0, 8.0] {
            let d = steering(&pose, &target, l, 1.5, 10.0).abs();
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn speed_law() {
        let p = VehicleParams::default();
        assert_eq!(speed_control(7.0, 7.0, 0.5, &p), (0.0, 0.0));
        let (a, b) = speed_control(10.0, 4.0, 0.5, &p);
        assert_eq!(a, -3.0);
        assert_eq!(b, 3.0 / p.a_long_max);
        let p5 = VehicleParams { a_long_max: 5.0, ..p };
        assert_eq!(speed_control(0.0, 100.0, 0.5, &p5), (5.0, 0.0));
    }

    #[test]
    fn on_path_at_speed_is_neutral() {
        let plan = straight(30, 6.0);
        let c = control_tick(&Pose2D::new(0.0, 2.0, 0.0), 6.0, &plan, &PurePursuitParams::default(), &VehicleParams::default());
        assert_eq!(c, ControlCommand { accel: 0.0, steering: 0.0, brake: 0.0 });
    }

    #[test]
    fn empty_plan_brakes() {
        let c = control_tick(
            &Pose2D::new(0.0, 0.0, 0.0),
            3.0,
            &PathPlan::empty(PlanMode::Discovery),
            &PurePursuitParams::default(),
            &VehicleParams::default(),
        );
        assert_eq!(c.brake, 1.0);
        assert_eq!(c.steering, 0.0);
    }
}
