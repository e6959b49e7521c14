use nalgebra::Vector3;
use thiserror::Error;

use crate::model::{Point, Vector};

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum CameraError {
    #[error("point depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("pixel ({0}, {1}) lies outside the image")]
    OutsideImage(f64, f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
}

/// Pinhole intrinsics, distortion free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl CameraIntrinsics {
    /// Square-pixel intrinsics whose horizontal field of view is `hfov`.
    pub fn from_fov(width: f64, height: f64, hfov: f64) -> Self {
        let f = 0.5 * width / (0.5 * hfov).tan();
        Self {
            fx: f,
            fy: f,
            cx: 0.5 * width,
            cy: 0.5 * height,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CameraError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx <= self.width && self.cy >= 0.0 && self.cy <= self.height) {
            return Err(CameraError::InvalidIntrinsics("principal point outside image"));
        }
        Ok(())
    }

    pub fn contains(&self, pixel: &Point) -> bool {
        pixel.x >= 0.0 && pixel.x <= self.width && pixel.y >= 0.0 && pixel.y <= self.height
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self::from_fov(1280.0, 720.0, 120f64.to_radians())
    }
}

/// Camera placement relative to the vehicle reference point (rear axle).
/// The optical axis is aligned with the vehicle heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraMount {
    pub forward_offset: f64,
    pub height: f64,
}

impl Default for CameraMount {
    fn default() -> Self {
        Self {
            forward_offset: 0.0,
            height: 1.0,
        }
    }
}

impl CameraMount {
    /// Vehicle-frame `(forward, left)` plus height above ground to camera
    /// axes (X right, Y down, Z forward).
    pub fn vehicle_to_camera(&self, forward: f64, left: f64, up: f64) -> Vector3<f64> {
        Vector3::new(-left, self.height - up, forward - self.forward_offset)
    }

    /// Camera axes to vehicle-frame `(forward, left)`; the vertical
    /// component is dropped.
    pub fn camera_to_vehicle(&self, p: &Vector3<f64>) -> Vector {
        Vector::new(p.z + self.forward_offset, -p.x)
    }
}

/// `s p = A [I|0] P`: projects a camera-frame point to pixels.
pub fn project(point: &Vector3<f64>, intr: &CameraIntrinsics) -> Result<Point, CameraError> {
    if !(point.z > 0.0) {
        return Err(CameraError::NonPositiveDepth(point.z));
    }
    Ok(Point::new(
        intr.fx * point.x / point.z + intr.cx,
        intr.fy * point.y / point.z + intr.cy,
    ))
}

/// Recovers the camera-frame point behind a pixel at the given depth by
/// similar triangles.
pub fn backproject(
    pixel: &Point,
    depth: f64,
    intr: &CameraIntrinsics,
) -> Result<Vector3<f64>, CameraError> {
    if !(depth > 0.0) {
        return Err(CameraError::NonPositiveDepth(depth));
    }
    if !intr.contains(pixel) {
        return Err(CameraError::OutsideImage(pixel.x, pixel.y));
    }
    Ok(Vector3::new(
        (pixel.x - intr.cx) * depth / intr.fx,
        (pixel.y - intr.cy) * depth / intr.fy,
        depth,
    ))
}

/// Axis-aligned pixel box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Option<Self> {
        (x_min < x_max && y_min < y_max).then_some(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn centered(center: Point, width: f64, height: f64) -> Option<Self> {
        Self::new(
            center.x - 0.5 * width,
            center.y - 0.5 * height,
            center.x + 0.5 * width,
            center.y + 0.5 * height,
        )
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    inter / (a.area() + b.area() - inter)
}
