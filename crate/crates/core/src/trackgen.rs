//! Procedural track generation for tests and demos.
//!
//! Rows are emitted in traversal order: the start-line orange pair first
//! (left then right), then blue/yellow pairs along the direction of travel.
//! Blue cones in row order are therefore the ground-truth ordering of the
//! left side, and likewise for yellow.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::segments_intersect;
use crate::model::{left_of, ConeColor, MissionKind, Point, TrackDefinition, TrackError, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackGenParams {
    pub width: f64,
    pub cone_spacing: f64,
    /// Minimum centerline radius of curvature.
    pub min_radius: f64,
    /// Centerline length (Trackdrive loop length, Acceleration straight length).
    pub length: f64,
}

impl Default for TrackGenParams {
    fn default() -> Self {
        Self {
            width: 3.0,
            cone_spacing: 5.0,
            min_radius: 9.0,
            length: 200.0,
        }
    }
}

impl TrackGenParams {
    pub fn for_kind(kind: MissionKind) -> Self {
        match kind {
            MissionKind::Acceleration => Self {
                length: 75.0,
                ..Self::default()
            },
            _ => Self::default(),
        }
    }
}

/// Radius of the skidpad circles' centerline.
pub const SKIDPAD_RADIUS: f64 = 9.125;

const MAX_ATTEMPTS: usize = 400;

pub fn generate_track(
    seed: u64,
    kind: MissionKind,
    params: &TrackGenParams,
) -> Result<TrackDefinition, TrackError> {
    let p = params;
    for (name, v) in [
        ("width", p.width),
        ("cone_spacing", p.cone_spacing),
        ("min_radius", p.min_radius),
        ("length", p.length),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(TrackError::Infeasible(format!("{name} must be positive")));
        }
    }
    if p.min_radius < p.width {
        return Err(TrackError::Infeasible(format!(
            "min radius {} is smaller than track width {}",
            p.min_radius, p.width
        )));
    }
    match kind {
        MissionKind::Trackdrive => generate_loop(seed, p),
        MissionKind::Acceleration => generate_straight(p),
        MissionKind::Skidpad => generate_skidpad(p),
    }
}

struct Harmonics {
    terms: Vec<(f64, f64, f64)>, // (order, amplitude, phase)
}

impl Harmonics {
    fn eval(&self, phi: f64) -> (f64, f64, f64) {
        let mut r = 1.0;
        let mut dr = 0.0;
        let mut ddr = 0.0;
        for &(k, a, ph) in &self.terms {
            let arg = k * phi + ph;
            r += a * arg.cos();
            dr -= a * k * arg.sin();
            ddr -= a * k * k * arg.cos();
        }
        (r, dr, ddr)
    }

    fn speed(&self, phi: f64) -> f64 {
        let (r, dr, _) = self.eval(phi);
        (r * r + dr * dr).sqrt()
    }

    fn curvature(&self, phi: f64) -> f64 {
        let (r, dr, ddr) = self.eval(phi);
        (r * r + 2.0 * dr * dr - r * ddr) / (r * r + dr * dr).powf(1.5)
    }
}

fn generate_loop(seed: u64, p: &TrackGenParams) -> Result<TrackDefinition, TrackError> {
    if p.length < 2.0 * PI * p.min_radius {
        return Err(TrackError::Infeasible(format!(
            "loop length {} cannot respect min radius {}",
            p.length, p.min_radius
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut amp_scale = 1.0;
    const GRID: usize = 4096;
    for _ in 0..MAX_ATTEMPTS {
        let terms = [(2.0, 0.30), (3.0, 0.15), (4.0, 0.08)]
            .iter()
            .map(|&(k, amax)| {
                (
                    k,
                    rng.random_range(0.0..amax) * amp_scale,
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect();
        let rotation = rng.random_range(0.0..2.0 * PI);
        let clockwise = rng.random_bool(0.5);
        amp_scale *= 0.97;
        let h = Harmonics { terms };

        // cumulative arc length over phi (Simpson per cell)
        let dphi = 2.0 * PI / GRID as f64;
        let mut cum = vec![0.0; GRID + 1];
        for i in 0..GRID {
            let a = i as f64 * dphi;
            let seg = dphi / 6.0
                * (h.speed(a) + 4.0 * h.speed(a + 0.5 * dphi) + h.speed(a + dphi));
            cum[i + 1] = cum[i] + seg;
        }
        let perimeter = cum[GRID];
        let scale = p.length / perimeter;
        let max_curv = (0..GRID)
            .map(|i| h.curvature(i as f64 * dphi).abs())
            .fold(0.0, f64::max)
            / scale;
        if max_curv * p.min_radius > 1.0 {
            continue;
        }

        let (cs, ss) = (rotation.cos(), rotation.sin());
        let eval = |s_frac: f64| -> (Point, Vector) {
            // s_frac in [0,1) of arc length, traversal direction applied
            let target = if clockwise { (1.0 - s_frac) % 1.0 } else { s_frac } * perimeter;
            let i = match cum.binary_search_by(|v| v.total_cmp(&target)) {
                Ok(i) => i.min(GRID - 1),
                Err(i) => i.saturating_sub(1).min(GRID - 1),
            };
            let t = (target - cum[i]) / (cum[i + 1] - cum[i]);
            let phi = (i as f64 + t) * dphi;
            let (r, dr, _) = h.eval(phi);
            let (c, s) = (phi.cos(), phi.sin());
            let pos = Vector::new(r * c, r * s) * scale;
            let mut tan = Vector::new(dr * c - r * s, dr * s + r * c).normalize();
            if clockwise {
                tan = -tan;
            }
            let rot = |v: Vector| Vector::new(cs * v.x - ss * v.y, ss * v.x + cs * v.y);
            (Point::from(rot(pos)), rot(tan))
        };

        let n = (p.length / p.cone_spacing).round().max(4.0) as usize;
        let dense = (p.length / 0.5).ceil() as usize;
        let center: Vec<(Point, Vector)> = (0..dense).map(|i| eval(i as f64 / dense as f64)).collect();
        if !loop_is_well_separated(&center, p) {
            continue;
        }

        let mut cones = Vec::with_capacity(2 * n);
        for k in 0..n {
            let (c, t) = eval(k as f64 / n as f64);
            let nl = left_of(&t) * (0.5 * p.width);
            let (lc, rc) = if k == 0 {
                (ConeColor::OrangeStart, ConeColor::OrangeStart)
            } else {
                (ConeColor::Blue, ConeColor::Yellow)
            };
            cones.push((lc, c + nl));
            cones.push((rc, c - nl));
        }
        return TrackDefinition::from_cones(cones);
    }
    Err(TrackError::Infeasible(format!(
        "no loop satisfying the constraints found in {MAX_ATTEMPTS} attempts"
    )))
}

/// Boundary curves must not cross, opposite sides must stay at least 90 %
/// of the width apart, and distant parts of the loop must be far enough
/// apart not to be confused by cone ordering.
fn loop_is_well_separated(center: &[(Point, Vector)], p: &TrackGenParams) -> bool {
    let n = center.len();
    let step = p.length / n as f64;
    let left: Vec<Point> = center.iter().map(|(c, t)| c + left_of(t) * (0.5 * p.width)).collect();
    let right: Vec<Point> = center.iter().map(|(c, t)| c - left_of(t) * (0.5 * p.width)).collect();

    let far_arc = 30.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let arc = ((j - i) as f64 * step).min((n - j + i) as f64 * step);
            if arc > far_arc && (center[i].0 - center[j].0).norm() < p.width + 9.0 {
                return false;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if (left[i] - right[j]).norm() < 0.9 * p.width {
                return false;
            }
        }
    }
    let segs: Vec<(Point, Point)> = (0..n)
        .map(|i| (left[i], left[(i + 1) % n]))
        .chain((0..n).map(|i| (right[i], right[(i + 1) % n])))
        .collect();
    for i in 0..segs.len() {
        for j in (i + 1)..segs.len() {
            let adjacent = (i < n) == (j < n) && {
                let (a, b) = (i % n, j % n);
                (a + 1) % n == b || (b + 1) % n == a
            };
            if !adjacent && segments_intersect(segs[i].0, segs[i].1, segs[j].0, segs[j].1) {
                return false;
            }
        }
    }
    true
}

fn generate_straight(p: &TrackGenParams) -> Result<TrackDefinition, TrackError> {
    let n = (p.length / p.cone_spacing).round().max(2.0) as usize;
    let step = p.length / n as f64;
    let half = 0.5 * p.width;
    let mut cones = vec![
        (ConeColor::OrangeStart, Point::new(-half, 0.0)),
        (ConeColor::OrangeStart, Point::new(half, 0.0)),
    ];
    for k in 1..n {
        let y = k as f64 * step;
        cones.push((ConeColor::Blue, Point::new(-half, y)));
        cones.push((ConeColor::Yellow, Point::new(half, y)));
    }
    cones.push((ConeColor::OrangeStart, Point::new(-half, p.length)));
    cones.push((ConeColor::OrangeStart, Point::new(half, p.length)));
    TrackDefinition::from_cones(cones)
}

/// Figure eight through the origin: the right circle is driven clockwise,
/// then the left circle counterclockwise, both entered heading +y.
fn generate_skidpad(p: &TrackGenParams) -> Result<TrackDefinition, TrackError> {
    let radius = p.min_radius.max(SKIDPAD_RADIUS);
    let half = 0.5 * p.width;
    let n = (2.0 * PI * radius / p.cone_spacing).round().max(6.0) as usize;
    let mut cones = vec![
        (ConeColor::OrangeStart, Point::new(-half, 0.0)),
        (ConeColor::OrangeStart, Point::new(half, 0.0)),
    ];
    let corridor = |q: &Point| q.x.abs() < half - 0.3 && q.y.abs() < 8.0;
    for loop_sign in [1.0, -1.0] {
        // loop_sign 1: right circle (clockwise), -1: left circle
        let center = Vector::new(loop_sign * radius, 0.0);
        for k in 1..n {
            let s = k as f64 * 2.0 * PI * radius / n as f64;
            let beta = if loop_sign > 0.0 { PI - s / radius } else { s / radius };
            let radial = Vector::new(beta.cos(), beta.sin());
            let c = Point::from(center + radial * radius);
            let left_normal = if loop_sign > 0.0 { radial } else { -radial };
            for (color, q) in [
                (ConeColor::Blue, c + left_normal * half),
                (ConeColor::Yellow, c - left_normal * half),
            ] {
                if !corridor(&q) && q.coords.norm() > 2.0 {
                    cones.push((color, q));
                }
            }
        }
    }
    TrackDefinition::from_cones(cones)
}
