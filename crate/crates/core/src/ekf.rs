//! Extended Kalman filter on the kinematic bicycle model.
//!
//! State `[x, y, theta, nu]`, measurement `[x, y, theta, nu, omega]`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix4, RowVector4, SMatrix, Vector4};
use thiserror::Error;

use crate::model::{normalize_angle, Pose2D};

pub type Matrix5 = SMatrix<f64, 5, 5>;
pub type Matrix5x4 = SMatrix<f64, 5, 4>;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum EkfError {
    #[error("steering angle {0} is at or beyond the tangent singularity")]
    SteeringDomain(f64),
    #[error("innovation variance {0} is not positive")]
    SingularInnovation(f64),
    #[error("sample period must be positive, got {0}")]
    BadPeriod(f64),
    #[error("measurement has no available component")]
    EmptyMeasurement,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub nu: f64,
}

impl EkfState {
    pub fn from_pose(pose: &Pose2D, nu: f64) -> Self {
        Self {
            x: pose.x,
            y: pose.y,
            theta: pose.theta,
            nu,
        }
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.theta, self.nu)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self {
            x: v[0],
            y: v[1],
            theta: normalize_angle(v[2]),
            nu: v[3],
        }
    }

    pub fn pose(&self) -> Pose2D {
        Pose2D::new(self.x, self.y, self.theta)
    }
}

pub type EkfCovariance = Matrix4<f64>;

pub fn initial_covariance() -> EkfCovariance {
    Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 10f64.to_radians().powi(2), 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub accel: f64,
    /// Steering angle.
    pub alpha: f64,
    pub t_s: f64,
}

/// One measurement vector with a per-component availability mask.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurement {
    pub values: [f64; 5],
    pub mask: [bool; 5],
}

impl Measurement {
    pub fn full(x: f64, y: f64, theta: f64, nu: f64, omega: f64) -> Self {
        Self {
            values: [x, y, theta, nu, omega],
            mask: [true; 5],
        }
    }

    pub fn without_position(mut self) -> Self {
        self.mask[0] = false;
        self.mask[1] = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub q: Matrix4<f64>,
    pub r: Matrix5,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let q = Vector4::new(0.2f64.powi(2), 0.2f64.powi(2), (3.0 * PI / 180.0).powi(2), (0.5 * 1000.0 / 3600.0f64).powi(2));
        let r = nalgebra::Vector5::new(
            0.2f64.powi(2),
            0.2f64.powi(2),
            (10.0 * PI / 180.0).powi(2),
            (0.5 * 1000.0 / 3600.0f64).powi(2),
            (5.0 * (PI / 180.0) / 60.0).powi(2),
        );
        Self {
            q: Matrix4::from_diagonal(&q),
            r: Matrix5::from_diagonal(&r),
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), String> {
        if (0..4).any(|i| !(self.q[(i, i)] > 0.0)) || (0..5).any(|i| !(self.r[(i, i)] > 0.0)) {
            return Err("noise covariance diagonals must be positive".into());
        }
        Ok(())
    }
}

/// Which matrix propagates the covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianForm {
    /// Exact partial derivatives of the propagation map.
    #[default]
    Full,
    /// Drops the heading-column terms, keeping only the speed column.
    Literal,
}

fn check_alpha(alpha: f64) -> Result<(), EkfError> {
    if !alpha.is_finite() || alpha.abs() >= FRAC_PI_2 {
        return Err(EkfError::SteeringDomain(alpha));
    }
    Ok(())
}

/// Nonlinear propagation map without angle wrapping.
pub fn propagate(s: &Vector4<f64>, u: &ControlInput, wheelbase: f64) -> Vector4<f64> {
    let (theta, nu) = (s[2], s[3]);
    Vector4::new(
        s[0] - u.t_s * nu * theta.sin(),
        s[1] + u.t_s * nu * theta.cos(),
        theta + u.t_s / wheelbase * u.alpha.tan() * nu,
        nu + u.accel * u.t_s,
    )
}

pub fn jacobian(s: &Vector4<f64>, u: &ControlInput, wheelbase: f64, form: JacobianForm) -> Matrix4<f64> {
    let (theta, nu, ts) = (s[2], s[3], u.t_s);
    let (d_theta_x, d_theta_y) = match form {
        JacobianForm::Full => (-ts * nu * theta.cos(), -ts * nu * theta.sin()),
        JacobianForm::Literal => (0.0, 0.0),
    };
    Matrix4::new(
        1.0, 0.0, d_theta_x, -ts * theta.sin(),
        0.0, 1.0, d_theta_y, ts * theta.cos(),
        0.0, 0.0, 1.0, ts / wheelbase * u.alpha.tan(),
        0.0, 0.0, 0.0, 1.0,
    )
}

/// Measurement matrix; row five maps speed to yaw rate.
pub fn measurement_matrix(alpha: f64, wheelbase: f64) -> Matrix5x4 {
    let mut c = Matrix5x4::zeros();
    for i in 0..4 {
        c[(i, i)] = 1.0;
    }
    c[(4, 3)] = alpha.tan() / wheelbase;
    c
}

pub fn predict(
    state: &EkfState,
    p: &EkfCovariance,
    u: &ControlInput,
    q: &Matrix4<f64>,
    wheelbase: f64,
    form: JacobianForm,
) -> Result<(EkfState, EkfCovariance), EkfError> {
    check_alpha(u.alpha)?;
    if !(u.t_s > 0.0) {
        return Err(EkfError::BadPeriod(u.t_s));
    }
    let s = state.as_vector();
    let f = jacobian(&s, u, wheelbase, form);
    let p = f * p * f.transpose() + q;
    Ok((EkfState::from_vector(&propagate(&s, u, wheelbase)), symmetrize(&p)))
}

fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// Sequential scalar updates over the available components (valid because
/// R is diagonal), Joseph-form covariance. On a singular innovation the
/// inputs are returned untouched alongside the error.
pub fn update(
    state: &EkfState,
    p: &EkfCovariance,
    z: &Measurement,
    r: &Matrix5,
    alpha: f64,
    wheelbase: f64,
) -> Result<(EkfState, EkfCovariance), EkfError> {
    check_alpha(alpha)?;
    if !z.mask.iter().any(|&m| m) {
        return Err(EkfError::EmptyMeasurement);
    }
    let c = measurement_matrix(alpha, wheelbase);
    let mut x = state.as_vector();
    let mut pm = *p;
    for i in 0..5 {
        if !z.mask[i] {
            continue;
        }
        let h: RowVector4<f64> = c.row(i).into_owned();
        let mut innov = z.values[i] - (h * x)[0];
        if i == 2 {
            innov = normalize_angle(innov);
        }
        let ph = pm * h.transpose();
        let s = (h * ph)[0] + r[(i, i)];
        if !(s > 0.0) || !s.is_finite() {
            return Err(EkfError::SingularInnovation(s));
        }
        let k = ph / s;
        x += k * innov;
        x[2] = normalize_angle(x[2]);
        let ikh = Matrix4::identity() - k * h;
        pm = ikh * pm * ikh.transpose() + k * k.transpose() * r[(i, i)];
    }
    Ok((EkfState::from_vector(&x), symmetrize(&pm)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ekf {
    pub state: EkfState,
    pub p: EkfCovariance,
    pub noise: NoiseConfig,
    pub wheelbase: f64,
    pub jacobian: JacobianForm,
}

impl Ekf {
    pub fn new(initial: EkfState, noise: NoiseConfig, wheelbase: f64) -> Self {
        Self {
            state: initial,
            p: initial_covariance(),
            noise,
            wheelbase,
            jacobian: JacobianForm::Full,
        }
    }

    /// Predict then update. The position rows are dropped when `gnss_valid`
    /// is false. A failed update keeps the predicted state.
    pub fn fuse_step(&mut self, u: &ControlInput, z: &Measurement, gnss_valid: bool) -> Result<(Pose2D, f64), EkfError> {
        let (s, p) = predict(&self.state, &self.p, u, &self.noise.q, self.wheelbase, self.jacobian)?;
        self.state = s;
        self.p = p;
        let z = if gnss_valid { *z } else { z.without_position() };
        if z.mask.iter().any(|&m| m) {
            let (s, p) = update(&self.state, &self.p, &z, &self.noise.r, u.alpha, self.wheelbase)?;
            self.state = s;
            self.p = p;
        }
        Ok((self.state.pose(), self.state.nu))
    }
}
