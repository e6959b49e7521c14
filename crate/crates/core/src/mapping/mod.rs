//! World-frame cone map: association, ordering and track awareness.
//!
//! Positions are stored relative to the map origin (the first filter fix);
//! only a translation separates the map frame from the world frame.

pub mod awareness;
pub mod ordering;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{ConeColor, Point, Pose2D, Vector};
use crate::perception::ConeObservation;

pub use awareness::{awareness_update, AwarenessParams, AwarenessState, LapType};
pub use ordering::{order_cones, OrderingParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("map origin already set")]
    OriginAlreadySet,
    #[error("map origin not set")]
    OriginNotSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedCone {
    pub map_id: usize,
    /// Map-frame position.
    pub position: Point,
    pub color: ConeColor,
    pub weight_sum: f64,
    pub n_obs: u32,
}

/// Elliptical association gate, `r(d) = r0 (1 + k d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateParams {
    pub r0: f64,
    pub k: f64,
    pub minor_ratio: f64,
}

impl Default for GateParams {
    fn default() -> Self {
        Self {
            r0: 0.5,
            k: 0.1,
            minor_ratio: 0.6,
        }
    }
}

impl GateParams {
    pub fn major(&self, d: f64) -> f64 {
        self.r0 * (1.0 + self.k * d)
    }

    /// Whether `p` lies in the gate centered on `center`, with the major
    /// axis along `ray` (unit vector from vehicle toward the cone).
    pub fn contains(&self, center: &Point, p: &Point, ray: &Vector, d: f64) -> bool {
        let a = self.major(d);
        let b = self.minor_ratio * a;
        let delta = p - center;
        let along = delta.dot(ray);
        let across = delta.x * ray.y - delta.y * ray.x;
        (along / a).powi(2) + (across / b).powi(2) <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GlobalMap {
    pub origin: Option<Pose2D>,
    pub cones: Vec<MappedCone>,
    pub ordered_left: Vec<usize>,
    pub ordered_right: Vec<usize>,
    pub left_closed: bool,
    pub right_closed: bool,
    /// `(left, right)` start-line cone ids.
    pub start_pair: Option<(usize, usize)>,
    /// Unit direction of travel at the start, map frame.
    pub start_direction: Option<Vector>,
    pub gate: GateParams,
    /// Last map id each tracker id was merged into (diagnostic only).
    pub track_links: BTreeMap<u64, usize>,
}

impl GlobalMap {
    pub fn new(gate: GateParams) -> Self {
        Self {
            gate,
            ..Self::default()
        }
    }

    /// Stores the world reference. The start direction is the fix heading.
    pub fn set_origin(&mut self, first_fix: Pose2D) -> Result<(), MapError> {
        if self.origin.is_some() {
            return Err(MapError::OriginAlreadySet);
        }
        self.origin = Some(first_fix);
        self.start_direction = Some(first_fix.forward());
        Ok(())
    }

    pub fn origin_point(&self) -> Point {
        self.origin.map_or(Point::origin(), |o| o.position())
    }

    pub fn to_map(&self, world: &Point) -> Point {
        Point::from(world - self.origin_point().coords)
    }

    pub fn to_world(&self, map: &Point) -> Point {
        map + self.origin_point().coords
    }

    pub fn pose_to_map(&self, pose: &Pose2D) -> Pose2D {
        let p = self.to_map(&pose.position());
        Pose2D::new(p.x, p.y, pose.theta)
    }

    pub fn cone(&self, id: usize) -> &MappedCone {
        &self.cones[id]
    }

    /// Cones with at least `min_obs` observations.
    pub fn confirmed(&self, min_obs: u32) -> impl Iterator<Item = &MappedCone> {
        self.cones.iter().filter(move |c| c.n_obs >= min_obs)
    }

    /// Merges one observation at map-frame `p`, seen from `from` at distance
    /// `d`, into the nearest same-colored cone if it passes the gate.
    /// Returns the id of the cone that absorbed it.
    pub fn associate(&mut self, p: Point, color: ConeColor, from: Point, d: f64) -> usize {
        let d = d.max(1e-3);
        let w = 1.0 / d;
        let nearest = self
            .cones
            .iter()
            .filter(|c| c.color == color)
            .map(|c| (c.map_id, (c.position - p).norm_squared()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let ray = {
            let r = p - from;
            let n = r.norm();
            if n > 1e-12 {
                r / n
            } else {
                Vector::new(0.0, 1.0)
            }
        };
        if let Some((id, _)) = nearest {
            let c = &mut self.cones[id];
            if self.gate.contains(&c.position, &p, &ray, d) {
                let total = c.weight_sum + w;
                c.position = Point::from((c.position.coords * c.weight_sum + p.coords * w) / total);
                c.weight_sum = total;
                c.n_obs += 1;
                return id;
            }
        }
        let id = self.cones.len();
        self.cones.push(MappedCone {
            map_id: id,
            position: p,
            color,
            weight_sum: w,
            n_obs: 1,
        });
        id
    }

    /// Adds vehicle-frame observations taken at map-frame `pose`, skipping
    /// those beyond `max_range`. Returns the absorbing map ids in order.
    pub fn integrate(&mut self, pose: &Pose2D, observations: &[ConeObservation], max_range: f64) -> Vec<usize> {
        let mut ids = Vec::with_capacity(observations.len());
        for obs in observations {
            let d = obs.position.norm();
            if d > max_range {
                continue;
            }
            let p = pose.to_world(obs.position.x, obs.position.y);
            let id = self.associate(p, obs.color, pose.position(), d);
            self.track_links.insert(obs.track_id, id);
            ids.push(id);
        }
        ids
    }

    /// Picks the two confirmed start-line cones closest to the map origin
    /// and assigns sides: the pairing closest to the first blue and yellow
    /// cones wins; without boundary cones, geometry relative to the start
    /// direction decides.
    pub fn identify_start_pair(&mut self, min_obs: u32) {
        if self.start_pair.is_some() {
            return;
        }
        let mut oranges: Vec<&MappedCone> = self
            .confirmed(min_obs)
            .filter(|c| c.color == ConeColor::OrangeStart)
            .collect();
        if oranges.len() < 2 {
            return;
        }
        oranges.sort_by(|a, b| {
            a.position
                .coords
                .norm()
                .total_cmp(&b.position.coords.norm())
                .then(a.map_id.cmp(&b.map_id))
        });
        let (a, b) = (oranges[0], oranges[1]);
        let dist_to = |p: &Point, color: ConeColor| {
            self.confirmed(min_obs)
                .filter(|c| c.color == color)
                .map(|c| (c.position - p).norm())
                .fold(f64::INFINITY, f64::min)
        };
        let ab = dist_to(&a.position, ConeColor::Blue) + dist_to(&b.position, ConeColor::Yellow);
        let ba = dist_to(&b.position, ConeColor::Blue) + dist_to(&a.position, ConeColor::Yellow);
        let a_left = if ab.is_finite() && ba.is_finite() && ab != ba {
            ab < ba
        } else {
            let dir = self.start_direction.unwrap_or(Vector::new(0.0, 1.0));
            let rel = a.position - b.position;
            dir.x * rel.y - dir.y * rel.x > 0.0
        };
        self.start_pair = Some(if a_left {
            (a.map_id, b.map_id)
        } else {
            (b.map_id, a.map_id)
        });
    }

    pub fn ordered_points(&self, color: ConeColor) -> Vec<Point> {
        let ids = match color {
            ConeColor::Blue => &self.ordered_left,
            ConeColor::Yellow => &self.ordered_right,
            ConeColor::OrangeStart => return Vec::new(),
        };
        ids.iter().map(|&i| self.cones[i].position).collect()
    }

    /// Boundary polyline for one side, starting at its start-line cone.
    pub fn boundary(&self, color: ConeColor) -> Vec<Point> {
        let mut pts = Vec::new();
        if let Some((l, r)) = self.start_pair {
            match color {
                ConeColor::Blue => pts.push(self.cones[l].position),
                ConeColor::Yellow => pts.push(self.cones[r].position),
                ConeColor::OrangeStart => {}
            }
        }
        pts.extend(self.ordered_points(color));
        pts
    }

    /// `color,x,y,map_id,n_obs` in the world frame.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("color,x,y,map_id,n_obs\n");
        for c in &self.cones {
            let w = self.to_world(&c.position);
            s.push_str(&format!("{},{},{},{},{}\n", c.color.tag(), w.x, w.y, c.map_id, c.n_obs));
        }
        s
    }
}
