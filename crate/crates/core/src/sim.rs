//! Ground-truth vehicle dynamics and noisy sensors.
//!
//! The truth model integrates the kinematic bicycle at 1 ms or finer so it is
//! never the same discretization as the 0.1 s filter model. Every sampling
//! function takes its random stream explicitly.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::control::ControlCommand;
use crate::model::{normalize_angle, ConeColor, Point, Pose2D, TrackDefinition, VehicleParams};
use crate::perception::{project, BBox, CameraIntrinsics, CameraMount};

/// Inner integration step bound.
pub const MAX_INNER_STEP: f64 = 1e-3;

/// Physical cone size used for box rendering.
pub const CONE_WIDTH: f64 = 0.228;
pub const CONE_HEIGHT: f64 = 0.325;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueVehicleState {
    pub pose: Pose2D,
    pub speed: f64,
    /// Actual steering angle of the front wheel.
    pub steer: f64,
}

impl TrueVehicleState {
    pub fn at_rest(pose: Pose2D) -> Self {
        Self {
            pose,
            speed: 0.0,
            steer: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorConfig {
    pub gnss_sigma: f64,
    pub rtk_sigma: f64,
    pub gnss_dropout_prob: f64,
    pub rtk_dropout_prob: f64,
    /// Seconds a dropout freezes the reported fix.
    pub dropout_hold_s: f64,
    pub heading_sigma: f64,
    pub yaw_rate_sigma: f64,
    pub wheel_speed_sigma: f64,
    /// Depth bias magnitude at 8 m; the bias pulls cones toward the camera.
    pub depth_bias_at_8m: f64,
    pub depth_noise_sigma_at_8m: f64,
    /// Growth rate of the exponential depth error curve, 1/m.
    pub depth_lambda: f64,
    pub blue_bias_multiplier: f64,
    pub yellow_bias_multiplier: f64,
    pub outlier_prob: f64,
    pub camera_fov: f64,
    pub camera_range: f64,
    pub rate_hz: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            gnss_sigma: 0.5,
            rtk_sigma: 0.02,
            gnss_dropout_prob: 0.02,
            rtk_dropout_prob: 0.0,
            dropout_hold_s: 1.0,
            heading_sigma: 2f64.to_radians(),
            yaw_rate_sigma: 0.005,
            wheel_speed_sigma: 0.05,
            depth_bias_at_8m: 0.5,
            depth_noise_sigma_at_8m: 0.15,
            depth_lambda: 0.35,
            blue_bias_multiplier: 1.0,
            yellow_bias_multiplier: 1.0,
            outlier_prob: 0.01,
            camera_fov: 120f64.to_radians(),
            camera_range: 12.0,
            rate_hz: 10.0,
        }
    }
}

impl SensorConfig {
    /// Every noise source switched off.
    pub fn noiseless() -> Self {
        Self {
            gnss_sigma: 0.0,
            rtk_sigma: 0.0,
            gnss_dropout_prob: 0.0,
            rtk_dropout_prob: 0.0,
            heading_sigma: 0.0,
            yaw_rate_sigma: 0.0,
            wheel_speed_sigma: 0.0,
            depth_bias_at_8m: 0.0,
            depth_noise_sigma_at_8m: 0.0,
            outlier_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let sigmas = [
            ("gnss_sigma", self.gnss_sigma),
            ("rtk_sigma", self.rtk_sigma),
            ("dropout_hold_s", self.dropout_hold_s),
            ("heading_sigma", self.heading_sigma),
            ("yaw_rate_sigma", self.yaw_rate_sigma),
            ("wheel_speed_sigma", self.wheel_speed_sigma),
            ("depth_bias_at_8m", self.depth_bias_at_8m),
            ("depth_noise_sigma_at_8m", self.depth_noise_sigma_at_8m),
            ("blue_bias_multiplier", self.blue_bias_multiplier),
            ("yellow_bias_multiplier", self.yellow_bias_multiplier),
        ];
        for (name, v) in sigmas {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(format!("{name} must be a finite non-negative number"));
            }
        }
        for (name, v) in [
            ("gnss_dropout_prob", self.gnss_dropout_prob),
            ("rtk_dropout_prob", self.rtk_dropout_prob),
            ("outlier_prob", self.outlier_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.depth_lambda > 0.0) {
            return Err("depth_lambda must be positive".into());
        }
        if !(self.camera_fov > 0.0 && self.camera_fov < std::f64::consts::PI) {
            return Err("camera_fov must lie in (0, pi)".into());
        }
        if !(self.camera_range > 0.0 && self.rate_hz > 0.0) {
            return Err("camera_range and rate_hz must be positive".into());
        }
        Ok(())
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.rate_hz
    }

    /// Expected depth shortfall at depth `d`, before the color multiplier.
    pub fn depth_bias(&self, d: f64) -> f64 {
        self.depth_bias_at_8m * exp_shape(d, self.depth_lambda)
    }

    pub fn depth_sigma(&self, d: f64) -> f64 {
        self.depth_noise_sigma_at_8m * exp_shape(d, self.depth_lambda)
    }

    fn bias_multiplier(&self, color: ConeColor) -> f64 {
        match color {
            ConeColor::Blue => self.blue_bias_multiplier,
            ConeColor::Yellow => self.yellow_bias_multiplier,
            ConeColor::OrangeStart => 1.0,
        }
    }
}

/// `(e^{l d} - 1) / (e^{8 l} - 1)`: zero at contact, one at 8 m.
fn exp_shape(d: f64, lambda: f64) -> f64 {
    (lambda * d).exp_m1() / (8.0 * lambda).exp_m1()
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

/// Integrates the kinematic bicycle model (reference point on the rear
/// axle) over `dt`. Steering slews toward the command at the rate limit,
/// speed never goes negative and brake maps to deceleration.
pub fn step_dynamics(
    state: &TrueVehicleState,
    cmd: &ControlCommand,
    dt: f64,
    params: &VehicleParams,
) -> TrueVehicleState {
    if !(dt > 0.0) {
        return *state;
    }
    let n = (dt / MAX_INNER_STEP - 1e-9).ceil().max(1.0) as usize;
    let h = dt / n as f64;

    let steer_target = cmd.steering.clamp(-params.max_steer, params.max_steer);
    let mut accel = cmd.accel;
    if cmd.brake > 0.0 {
        accel = accel.min(-cmd.brake.min(1.0) * params.a_long_max);
    }
    let accel = accel.clamp(-params.a_long_max, params.a_long_max);

    let (mut x, mut y, mut theta) = (state.pose.x, state.pose.y, state.pose.theta);
    let mut v = state.speed.max(0.0);
    let mut steer = state.steer.clamp(-params.max_steer, params.max_steer);
    let max_dsteer = params.max_steer_rate * h;
    for _ in 0..n {
        steer += (steer_target - steer).clamp(-max_dsteer, max_dsteer);
        let v_next = (v + accel * h).max(0.0);
        let v_mid = 0.5 * (v + v_next);
        let omega = v_mid * steer.tan() / params.wheelbase;
        let theta_mid = theta + 0.5 * omega * h;
        x -= v_mid * theta_mid.sin() * h;
        y += v_mid * theta_mid.cos() * h;
        theta += omega * h;
        v = v_next;
    }
    TrueVehicleState {
        pose: Pose2D::new(x, y, theta),
        speed: v,
        steer,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnssFix {
    pub x: f64,
    pub y: f64,
    /// False while the receiver is in a dropout.
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Magnetometer heading.
    pub heading: f64,
    pub yaw_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelSpeed {
    pub v: f64,
}

/// Position receiver with dropout memory. During a dropout the last fix is
/// repeated with `valid = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct GnssReceiver {
    pub sigma: f64,
    pub dropout_prob: f64,
    pub hold_s: f64,
    last: Option<(f64, f64)>,
    hold_remaining: f64,
}

impl GnssReceiver {
    pub fn new(sigma: f64, dropout_prob: f64, hold_s: f64) -> Self {
        Self {
            sigma,
            dropout_prob,
            hold_s,
            last: None,
            hold_remaining: 0.0,
        }
    }

    pub fn gnss(config: &SensorConfig) -> Self {
        Self::new(config.gnss_sigma, config.gnss_dropout_prob, config.dropout_hold_s)
    }

    pub fn rtk(config: &SensorConfig) -> Self {
        Self::new(config.rtk_sigma, config.rtk_dropout_prob, config.dropout_hold_s)
    }

    pub fn in_dropout(&self) -> bool {
        self.hold_remaining > 0.0
    }

    /// One fix; `period` is the time since the previous call.
    pub fn sample<R: Rng + ?Sized>(&mut self, state: &TrueVehicleState, period: f64, rng: &mut R) -> GnssFix {
        let nx = gaussian(rng, self.sigma);
        let ny = gaussian(rng, self.sigma);
        let start_dropout = self.dropout_prob > 0.0 && rng.random::<f64>() < self.dropout_prob;

        if self.hold_remaining > 0.0 {
            self.hold_remaining -= period;
            if self.hold_remaining > 1e-9 {
                if let Some((x, y)) = self.last {
                    return GnssFix { x, y, valid: false };
                }
            }
            self.hold_remaining = 0.0;
        } else if start_dropout {
            self.hold_remaining = self.hold_s;
            if let Some((x, y)) = self.last {
                return GnssFix { x, y, valid: false };
            }
        }
        let fix = GnssFix {
            x: state.pose.x + nx,
            y: state.pose.y + ny,
            valid: self.hold_remaining <= 0.0,
        };
        self.last = Some((fix.x, fix.y));
        fix
    }
}

pub fn sample_imu<R: Rng + ?Sized>(
    state: &TrueVehicleState,
    config: &SensorConfig,
    params: &VehicleParams,
    rng: &mut R,
) -> ImuSample {
    let heading = normalize_angle(state.pose.theta + gaussian(rng, config.heading_sigma));
    let yaw_rate = state.speed * state.steer.tan() / params.wheelbase + gaussian(rng, config.yaw_rate_sigma);
    ImuSample { heading, yaw_rate }
}

pub fn sample_wheel_speed<R: Rng + ?Sized>(state: &TrueVehicleState, config: &SensorConfig, rng: &mut R) -> WheelSpeed {
    WheelSpeed {
        v: (state.speed + gaussian(rng, config.wheel_speed_sigma)).max(0.0),
    }
}

/// A simulated detector output. `true_cone_id` is for evaluation only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub depth: f64,
    pub color: ConeColor,
    pub true_cone_id: usize,
    /// Noise-free depth, kept for calibration plots.
    pub true_depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub mount: CameraMount,
}

/// Renders every cone inside the field of view and range as a box centered
/// on its projection, with depth carrying the exponential error model.
pub fn render_cones<R: Rng + ?Sized>(
    state: &TrueVehicleState,
    track: &TrackDefinition,
    camera: &Camera,
    config: &SensorConfig,
    rng: &mut R,
) -> Vec<Detection> {
    let half_fov = 0.5 * config.camera_fov;
    let mut out = Vec::new();
    for cone in &track.cones {
        let rel = state.pose.to_vehicle(&cone.position);
        let forward = rel.x - camera.mount.forward_offset;
        let left = rel.y;
        if forward <= 0.0 || left.atan2(forward).abs() > half_fov {
            continue;
        }
        if forward.hypot(left) > config.camera_range {
            continue;
        }
        let p_cam = camera
            .mount
            .vehicle_to_camera(rel.x, rel.y, 0.5 * CONE_HEIGHT);
        let Ok(center) = project(&p_cam, &camera.intrinsics) else {
            continue;
        };
        if !camera.intrinsics.contains(&center) {
            continue;
        }
        let d = p_cam.z;
        let Some(bbox) = BBox::centered(
            center,
            camera.intrinsics.fx * CONE_WIDTH / d,
            camera.intrinsics.fy * CONE_HEIGHT / d,
        ) else {
            continue;
        };

        let noise = gaussian(rng, config.depth_sigma(d));
        let outlier = config.outlier_prob > 0.0 && rng.random::<f64>() < config.outlier_prob;
        let mut depth = if outlier {
            rng.random_range(0.5 * d..=1.5 * d)
        } else {
            d - config.depth_bias(d) * config.bias_multiplier(cone.color) + noise
        };
        depth = depth.max(0.05);
        out.push(Detection {
            bbox,
            depth,
            color: cone.color,
            true_cone_id: cone.id,
            true_depth: d,
        });
    }
    out
}

/// Pixel center of a detection; the bbox is symmetric about the projection.
pub fn detection_center(d: &Detection) -> Point {
    d.bbox.center()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coast() -> ControlCommand {
        ControlCommand {
            accel: 0.0,
            steering: 0.0,
            brake: 0.0,
        }
    }

    #[test]
    fn straight_line_along_y() {
        let s = TrueVehicleState {
            pose: Pose2D::new(0.0, 0.0, 0.0),
            speed: 5.0,
            steer: 0.0,
        };
        let n = step_dynamics(&s, &coast(), 0.1, &VehicleParams::default());
        assert_eq!(n.pose.x, 0.0);
        assert!((n.pose.y - 0.5).abs() < 1e-12);
        assert_eq!(n.pose.theta, 0.0);
        assert_eq!(n.speed, 5.0);
    }

    #[test]
    fn uniform_acceleration_from_rest() {
        let s = TrueVehicleState::at_rest(Pose2D::new(0.0, 0.0, 0.0));
        let cmd = ControlCommand { accel: 2.0, ..coast() };
        let n = step_dynamics(&s, &cmd, 0.1, &VehicleParams::default());
        assert!((n.speed - 0.2).abs() < 1e-12);
        // closed form: a t^2 / 2
        assert!((n.pose.y - 0.5 * 2.0 * 0.01).abs() < 1e-12);
    }

    #[test]
    fn constant_steer_closes_circle() {
        let params = VehicleParams::default();
        let steer = (0.1 * params.wheelbase).atan();
        let s = TrueVehicleState {
            pose: Pose2D::new(3.0, -2.0, 0.4),
            speed: 5.0,
            steer,
        };
        let cmd = ControlCommand { steering: steer, ..coast() };
        let period = 2.0 * std::f64::consts::PI / 0.5;
        let n = step_dynamics(&s, &cmd, period, &params);
        assert!((n.pose.position() - s.pose.position()).norm() < 1e-3);
        assert!(normalize_angle(n.pose.theta - s.pose.theta).abs() < 1e-6);
    }

    #[test]
    fn rest_is_exactly_conserved() {
        let s = TrueVehicleState {
            pose: Pose2D::new(1.25, -7.5, 2.0),
            speed: 0.0,
            steer: 0.3,
        };
        let cmd = ControlCommand { steering: 0.3, ..coast() };
        let n = step_dynamics(&s, &cmd, 0.1, &VehicleParams::default());
        assert_eq!(n.pose, s.pose);
    }

    #[test]
    fn braking_stops_without_reversing() {
        let s = TrueVehicleState {
            pose: Pose2D::new(0.0, 0.0, 0.0),
            speed: 0.1,
            steer: 0.0,
        };
        let cmd = ControlCommand { accel: -4.0, steering: 0.0, brake: 1.0 };
        let n = step_dynamics(&s, &cmd, 1.0, &VehicleParams::default());
        assert_eq!(n.speed, 0.0);
        assert!(n.pose.y > 0.0 && n.pose.y < 0.01);
    }

    #[test]
    fn steering_is_rate_limited() {
        let p = VehicleParams::default();
        let s = TrueVehicleState::at_rest(Pose2D::new(0.0, 0.0, 0.0));
        let cmd = ControlCommand { steering: 0.4, ..coast() };
        let n = step_dynamics(&s, &cmd, 0.1, &p);
        assert!((n.steer - p.max_steer_rate * 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_sigma_fix_is_exact() {
        let cfg = SensorConfig::noiseless();
        let s = TrueVehicleState::at_rest(Pose2D::new(4.0, 5.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rx = GnssReceiver::gnss(&cfg);
        let f = rx.sample(&s, 0.1, &mut rng);
        assert_eq!((f.x, f.y, f.valid), (4.0, 5.0, true));
        let imu = sample_imu(&s, &cfg, &VehicleParams::default(), &mut rng);
        assert_eq!(imu.heading, 0.0);
        assert_eq!(imu.yaw_rate, 0.0);
        assert_eq!(sample_wheel_speed(&s, &cfg, &mut rng).v, 0.0);
    }

    #[test]
    fn dropout_holds_last_fix() {
        let s = TrueVehicleState::at_rest(Pose2D::new(0.0, 0.0, 0.0));
        let mut rx = GnssReceiver::new(0.1, 0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let first = rx.sample(&s, 0.1, &mut rng);
        rx.dropout_prob = 1.0;
        let held = rx.sample(&s, 0.1, &mut rng);
        assert!(!held.valid);
        assert_eq!((held.x, held.y), (first.x, first.y));
        rx.dropout_prob = 0.0;
        let mut n_invalid = 1;
        loop {
            let f = rx.sample(&s, 0.1, &mut rng);
            if f.valid {
                break;
            }
            assert_eq!((f.x, f.y), (first.x, first.y));
            n_invalid += 1;
        }
        assert_eq!(n_invalid, 10);
    }

    #[test]
    fn yaw_rate_follows_bicycle_kinematics() {
        let p = VehicleParams::default();
        let s = TrueVehicleState {
            pose: Pose2D::new(0.0, 0.0, 0.0),
            speed: 5.0,
            steer: (0.1 * p.wheelbase).atan(),
        };
        let imu = sample_imu(&s, &SensorConfig::noiseless(), &p, &mut ChaCha8Rng::seed_from_u64(0));
        assert!((imu.yaw_rate - 0.5).abs() < 1e-12);
    }

    fn single_cone_track(p: Point) -> TrackDefinition {
        let mut cones = vec![
            (ConeColor::OrangeStart, Point::new(-100.0, -100.0)),
            (ConeColor::OrangeStart, Point::new(-103.0, -100.0)),
            (ConeColor::Blue, Point::new(-100.0, -95.0)),
            (ConeColor::Yellow, Point::new(-103.0, -95.0)),
            (ConeColor::Yellow, Point::new(-103.0, -90.0)),
        ];
        cones.push((ConeColor::Blue, p));
        TrackDefinition::from_cones(cones).unwrap()
    }

    #[test]
    fn cone_ahead_at_8m_reports_bias() {
        let cfg = SensorConfig {
            depth_noise_sigma_at_8m: 0.0,
            outlier_prob: 0.0,
            ..SensorConfig::default()
        };
        let s = TrueVehicleState::at_rest(Pose2D::new(0.0, 0.0, 0.0));
        let track = single_cone_track(Point::new(0.0, 8.0));
        let dets = render_cones(&s, &track, &Camera::default(), &cfg, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].true_cone_id, 5);
        assert!((dets[0].true_depth - 8.0).abs() < 1e-12);
        assert!((dets[0].depth - 7.5).abs() < 1e-12);
    }

    #[test]
    fn cone_behind_not_rendered() {
        let s = TrueVehicleState::at_rest(Pose2D::new(0.0, 0.0, 0.0));
        let track = single_cone_track(Point::new(0.0, -4.0));
        let dets = render_cones(&s, &track, &Camera::default(), &SensorConfig::default(), &mut ChaCha8Rng::seed_from_u64(3));
        assert!(dets.is_empty());
    }

    #[test]
    fn bias_vanishes_at_contact() {
        let cfg = SensorConfig::default();
        assert_eq!(cfg.depth_bias(0.0), 0.0);
        assert!((cfg.depth_bias(8.0) - 0.5).abs() < 1e-15);
        assert!(cfg.depth_bias(4.0) < cfg.depth_bias(8.0));
    }

    #[test]
    fn box_size_shrinks_with_depth() {
        let s = TrueVehicleState::at_rest(Pose2D::new(0.0, 0.0, 0.0));
        let cam = Camera::default();
        let cfg = SensorConfig::noiseless();
        let near = render_cones(&s, &single_cone_track(Point::new(0.0, 3.0)), &cam, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        let far = render_cones(&s, &single_cone_track(Point::new(0.0, 9.0)), &cam, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        let w = |d: &Detection| d.bbox.x_max - d.bbox.x_min;
        assert!((w(&near[0]) / w(&far[0]) - 3.0).abs() < 1e-9);
        let _ = Vector::zeros();
    }
}
