//! Shared domain types and the global frame convention.
//!
//! World frame is right-handed and planar. Heading `theta` is measured from
//! the +y axis, counterclockwise positive, so a vehicle moving at speed `v`
//! has velocity `(-v sin(theta), v cos(theta))`. The vehicle frame is
//! `(forward, left)`.

use std::f64::consts::PI;

use nalgebra::{Point2, Vector2};
use thiserror::Error;

pub type Point = Point2<f64>;
pub type Vector = Vector2<f64>;

/// Wraps an angle into `(-pi, pi]`. Values already in range are returned
/// untouched so the operation is idempotent bit-for-bit.
pub fn normalize_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Unit vector pointing along `heading`.
pub fn heading_vector(heading: f64) -> Vector {
    Vector::new(-heading.sin(), heading.cos())
}

/// Heading of a direction vector in the world convention.
pub fn vector_heading(dir: &Vector) -> f64 {
    (-dir.x).atan2(dir.y)
}

/// Rotates a vector 90 degrees counterclockwise, i.e. forward to left.
pub fn left_of(dir: &Vector) -> Vector {
    Vector::new(-dir.y, dir.x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConeColor {
    /// Left boundary in the direction of travel.
    Blue,
    /// Right boundary in the direction of travel.
    Yellow,
    /// Start and finish line markers.
    OrangeStart,
}

impl ConeColor {
    pub fn tag(self) -> &'static str {
        match self {
            ConeColor::Blue => "blue",
            ConeColor::Yellow => "yellow",
            ConeColor::OrangeStart => "orange",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "blue" => Some(ConeColor::Blue),
            "yellow" => Some(ConeColor::Yellow),
            "orange" => Some(ConeColor::OrangeStart),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cone {
    pub id: usize,
    pub position: Point,
    pub color: ConeColor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn forward(&self) -> Vector {
        heading_vector(self.theta)
    }

    pub fn left(&self) -> Vector {
        left_of(&self.forward())
    }

    /// Vehicle-frame `(forward, left)` offset to a world point.
    pub fn to_world(&self, forward: f64, left: f64) -> Point {
        self.position() + self.forward() * forward + self.left() * left
    }

    /// World point expressed as vehicle-frame `(forward, left)`.
    pub fn to_vehicle(&self, p: &Point) -> Vector {
        let d = p - self.position();
        Vector::new(d.dot(&self.forward()), d.dot(&self.left()))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("vehicle parameter `{0}` must be strictly positive")]
    NonPositive(&'static str),
    #[error("max_steer must be below pi/2")]
    SteerTooLarge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Distance between front and rear axles, meters.
    pub wheelbase: f64,
    pub max_steer: f64,
    pub max_steer_rate: f64,
    pub v_max: f64,
    pub a_lat_max: f64,
    pub a_long_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 1.53,
            max_steer: 0.45,
            max_steer_rate: 2.0,
            v_max: 10.0,
            a_lat_max: 5.0,
            a_long_max: 4.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let fields = [
            ("wheelbase", self.wheelbase),
            ("max_steer", self.max_steer),
            ("max_steer_rate", self.max_steer_rate),
            ("v_max", self.v_max),
            ("a_lat_max", self.a_lat_max),
            ("a_long_max", self.a_long_max),
        ];
        for (name, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ParamError::NonPositive(name));
            }
        }
        if self.max_steer >= PI / 2.0 {
            return Err(ParamError::SteerTooLarge);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MissionKind {
    /// Closed loop, map unknown.
    Trackdrive,
    /// Figure-eight with a known layout.
    Skidpad,
    /// Straight line with a known layout.
    Acceleration,
}

impl MissionKind {
    pub fn requires_reference_map(self) -> bool {
        !matches!(self, MissionKind::Trackdrive)
    }

    pub fn name(self) -> &'static str {
        match self {
            MissionKind::Trackdrive => "trackdrive",
            MissionKind::Skidpad => "skidpad",
            MissionKind::Acceleration => "acceleration",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "trackdrive" => Some(MissionKind::Trackdrive),
            "skidpad" => Some(MissionKind::Skidpad),
            "acceleration" => Some(MissionKind::Acceleration),
            _ => None,
        }
    }
}

/// Minimum allowed spacing between any two cones of a track.
pub const MIN_CONE_SEPARATION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}", match .line { Some(l) => format!("line {l}: {message}"), None => message.clone() })]
    Validation { line: Option<usize>, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("infeasible generation parameters: {0}")]
    Infeasible(String),
}

/// Circuit layout. Rows are kept in file order, which for generated tracks
/// is also the traversal order of each side.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackDefinition {
    pub cones: Vec<Cone>,
    /// `(left, right)` ids of the start line orange cones.
    pub start_line: (usize, usize),
    /// Unit vector of the direction of travel across the start line.
    pub direction_hint: Vector,
}

impl TrackDefinition {
    /// Builds and validates a track from cones in row order. Ids are
    /// reassigned to the row index.
    ///
    /// The start line is the first two orange cones; which of the two is on
    /// the left is decided by the side the nearest blue cone lies on.
    pub fn from_cones(cones: Vec<(ConeColor, Point)>) -> Result<Self, TrackError> {
        let cones: Vec<Cone> = cones
            .into_iter()
            .enumerate()
            .map(|(id, (color, position))| Cone { id, position, color })
            .collect();

        for cone in &cones {
            if !cone.position.x.is_finite() || !cone.position.y.is_finite() {
                return Err(TrackError::Validation {
                    line: Some(cone.id + 2),
                    message: "non-finite coordinate".into(),
                });
            }
        }
        for color in [ConeColor::Blue, ConeColor::Yellow, ConeColor::OrangeStart] {
            let n = cones.iter().filter(|c| c.color == color).count();
            if n < 2 {
                return Err(TrackError::Validation {
                    line: None,
                    message: format!("need at least 2 {} cones, found {n}", color.tag()),
                });
            }
        }
        for (i, a) in cones.iter().enumerate() {
            for b in &cones[..i] {
                if (a.position - b.position).norm() < MIN_CONE_SEPARATION {
                    return Err(TrackError::Validation {
                        line: Some(a.id + 2),
                        message: format!(
                            "cone closer than {MIN_CONE_SEPARATION} m to the cone on line {}",
                            b.id + 2
                        ),
                    });
                }
            }
        }

        let mut oranges = cones.iter().filter(|c| c.color == ConeColor::OrangeStart);
        let o1 = *oranges.next().expect("validated");
        let o2 = *oranges.next().expect("validated");
        let mid = Point::from((o1.position.coords + o2.position.coords) * 0.5);
        let nearest_blue = cones
            .iter()
            .filter(|c| c.color == ConeColor::Blue)
            .min_by(|a, b| {
                let da = (a.position - mid).norm();
                let db = (b.position - mid).norm();
                da.total_cmp(&db)
            })
            .expect("validated");
        let across = o1.position - o2.position;
        let (left, right) = if (nearest_blue.position - mid).dot(&across) >= 0.0 {
            (o1, o2)
        } else {
            (o2, o1)
        };
        let left_dir = left.position - right.position;
        if left_dir.norm() == 0.0 {
            return Err(TrackError::Validation {
                line: Some(right.id + 2),
                message: "start line cones coincide".into(),
            });
        }
        // forward is the left vector rotated clockwise
        let direction_hint = Vector::new(left_dir.y, -left_dir.x).normalize();

        Ok(Self {
            cones,
            start_line: (left.id, right.id),
            direction_hint,
        })
    }

    pub fn cone(&self, id: usize) -> &Cone {
        &self.cones[id]
    }

    pub fn start_midpoint(&self) -> Point {
        let l = self.cones[self.start_line.0].position;
        let r = self.cones[self.start_line.1].position;
        Point::from((l.coords + r.coords) * 0.5)
    }

    pub fn start_heading(&self) -> f64 {
        vector_heading(&self.direction_hint)
    }

    /// Cones of one color in row order.
    pub fn side(&self, color: ConeColor) -> Vec<&Cone> {
        self.cones.iter().filter(|c| c.color == color).collect()
    }

    /// Last two orange rows, when the track has a separate finish line.
    pub fn finish_line(&self) -> Option<(usize, usize)> {
        let oranges: Vec<&Cone> = self.side(ConeColor::OrangeStart);
        if oranges.len() < 4 {
            return None;
        }
        let a = oranges[oranges.len() - 2];
        let b = oranges[oranges.len() - 1];
        let left_dir = self.cones[self.start_line.0].position - self.cones[self.start_line.1].position;
        if (a.position - b.position).dot(&left_dir) >= 0.0 {
            Some((a.id, b.id))
        } else {
            Some((b.id, a.id))
        }
    }

    /// Pose `offset` meters behind the start line midpoint, facing along the
    /// direction hint.
    pub fn staging_pose(&self, offset: f64) -> Pose2D {
        let p = self.start_midpoint() - self.direction_hint * offset;
        Pose2D::new(p.x, p.y, self.start_heading())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_is_idempotent_and_in_range() {
        for a in [-10.0, -PI, -3.0, 0.0, 3.0, PI, 7.0, 100.0] {
            let n = normalize_angle(a);
            assert!(n > -PI && n <= PI, "{a} -> {n}");
            assert_eq!(normalize_angle(n), n);
        }
        assert_eq!(normalize_angle(-PI), PI);
    }

    #[test]
    fn heading_convention() {
        let p = Pose2D::new(0.0, 0.0, 0.0);
        assert!((p.forward() - Vector::new(0.0, 1.0)).norm() < 1e-15);
        assert!((p.left() - Vector::new(-1.0, 0.0)).norm() < 1e-15);
        let q = Pose2D::new(1.0, 2.0, 0.7);
        let w = q.to_world(3.0, -1.5);
        let v = q.to_vehicle(&w);
        assert!((v - Vector::new(3.0, -1.5)).norm() < 1e-12);
        assert!((vector_heading(&heading_vector(0.7)) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn vehicle_params_validation() {
        assert!(VehicleParams::default().validate().is_ok());
        let p = VehicleParams {
            v_max: 0.0,
            ..Default::default()
        };
        assert_eq!(p.validate(), Err(ParamError::NonPositive("v_max")));
        let p = VehicleParams {
            max_steer: 1.6,
            ..Default::default()
        };
        assert_eq!(p.validate(), Err(ParamError::SteerTooLarge));
    }

    #[test]
    fn start_line_orientation_follows_blue_side() {
        let cones = vec![
            (ConeColor::OrangeStart, Point::new(1.5, 0.0)),
            (ConeColor::OrangeStart, Point::new(-1.5, 0.0)),
            (ConeColor::Blue, Point::new(-1.5, 5.0)),
            (ConeColor::Yellow, Point::new(1.5, 5.0)),
            (ConeColor::Blue, Point::new(-1.5, 10.0)),
            (ConeColor::Yellow, Point::new(1.5, 10.0)),
        ];
        let t = TrackDefinition::from_cones(cones).unwrap();
        assert_eq!(t.start_line, (1, 0));
        assert!((t.direction_hint - Vector::new(0.0, 1.0)).norm() < 1e-12);
        assert!(t.start_heading().abs() < 1e-12);
    }

    #[test]
    fn close_cones_rejected_with_line() {
        let cones = vec![
            (ConeColor::OrangeStart, Point::new(-1.5, 0.0)),
            (ConeColor::OrangeStart, Point::new(1.5, 0.0)),
            (ConeColor::Blue, Point::new(-1.5, 5.0)),
            (ConeColor::Blue, Point::new(-1.5, 5.05)),
            (ConeColor::Yellow, Point::new(1.5, 5.0)),
            (ConeColor::Yellow, Point::new(1.5, 10.0)),
        ];
        match TrackDefinition::from_cones(cones) {
            Err(TrackError::Validation { line: Some(5), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
