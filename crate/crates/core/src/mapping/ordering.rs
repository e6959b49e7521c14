//! Boundary ordering by triangular forward search.

use crate::model::{ConeColor, MissionKind, Point, Vector};

use super::GlobalMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderingParams {
    /// Half-angle of the search triangle at its apex.
    pub half_angle: f64,
    /// Triangle height along the search direction, meters.
    pub height: f64,
    /// Observations a cone needs before it is ordered.
    pub min_obs: u32,
    /// Candidates closer than this to the previous cone are duplicates.
    pub min_spacing: f64,
}

impl Default for OrderingParams {
    fn default() -> Self {
        Self {
            half_angle: 60f64.to_radians(),
            height: 8.0,
            min_obs: 2,
            min_spacing: 1.5,
        }
    }
}

impl OrderingParams {
    pub fn for_mission(kind: MissionKind) -> Self {
        match kind {
            // long straight rows; a narrow cone keeps the search on one side
            MissionKind::Acceleration => Self {
                half_angle: 30f64.to_radians(),
                height: 10.0,
                ..Self::default()
            },
            _ => Self::default(),
        }
    }
}

/// Whether `p` lies in the isosceles triangle with apex `apex`, unit axis
/// `dir`, half-angle `half_angle` and height `height`.
pub fn in_triangle(apex: &Point, dir: &Vector, p: &Point, half_angle: f64, height: f64) -> bool {
    let rel = p - apex;
    let t = rel.dot(dir);
    if !(t > 0.0 && t <= height) {
        return false;
    }
    let lat = (dir.x * rel.y - dir.y * rel.x).abs();
    lat <= t * half_angle.tan()
}

/// Chains same-colored cones from `seed` along `dir`. Returns the ordered
/// ids and whether the chain closes back onto the seed.
pub fn order_side(
    points: &[(usize, Point)],
    seed: Point,
    dir: Vector,
    params: &OrderingParams,
) -> (Vec<usize>, bool) {
    let mut used = vec![false; points.len()];
    let mut order = Vec::new();
    let mut last = seed;
    let mut dir = dir.normalize();
    loop {
        let best = points
            .iter()
            .enumerate()
            .filter(|(k, (_, p))| !used[*k] && in_triangle(&last, &dir, p, params.half_angle, params.height))
            .min_by(|a, b| {
                (a.1 .1 - last)
                    .norm()
                    .total_cmp(&(b.1 .1 - last).norm())
                    .then(a.1 .0.cmp(&b.1 .0))
            });
        let Some((k, &(id, p))) = best else {
            break;
        };
        used[k] = true;
        order.push(id);
        for (j, (_, q)) in points.iter().enumerate() {
            if (q - p).norm() < params.min_spacing {
                used[j] = true;
            }
        }
        let step = p - last;
        if step.norm() > 1e-9 {
            dir = step.normalize();
        }
        last = p;
    }
    let closed = order.len() >= 3 && in_triangle(&last, &dir, &seed, params.half_angle, params.height);
    (order, closed)
}

/// Recomputes both ordered boundaries from the start-line seeds. Does
/// nothing until the start pair and direction are known.
pub fn order_cones(map: &mut GlobalMap, params: &OrderingParams) {
    let (Some((l, r)), Some(dir)) = (map.start_pair, map.start_direction) else {
        return;
    };
    let collect = |color: ConeColor| -> Vec<(usize, Point)> {
        map.confirmed(params.min_obs)
            .filter(|c| c.color == color)
            .map(|c| (c.map_id, c.position))
            .collect()
    };
    let blue = collect(ConeColor::Blue);
    let yellow = collect(ConeColor::Yellow);
    let (left, lc) = order_side(&blue, map.cones[l].position, dir, params);
    let (right, rc) = order_side(&yellow, map.cones[r].position, dir, params);
    map.ordered_left = left;
    map.ordered_right = right;
    map.left_closed = lc;
    map.right_closed = rc;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Pose2D;

    #[test]
    fn duplicates_are_skipped() {
        let pts = vec![
            (0, Point::new(1.5, 5.0)),
            (1, Point::new(1.5, 10.0)),
            (2, Point::new(2.1, 10.2)),
            (3, Point::new(1.5, 15.0)),
        ];
        let (order, _) = order_side(&pts, Point::new(1.5, 0.0), Vector::new(0.0, 1.0), &OrderingParams::default());
        assert_eq!(order, vec![0, 1, 3]);
    }

    #[test]
    fn straight_row_in_geometric_order() {
        // shuffled ids along +y
        let pts: Vec<(usize, Point)> = [3usize, 0, 4, 1, 2]
            .iter()
            .map(|&i| (i, Point::new(1.5, 5.0 * (i as f64 + 1.0))))
            .collect();
        let (order, closed) = order_side(&pts, Point::new(1.5, 0.0), Vector::new(0.0, 1.0), &OrderingParams::default());
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
        assert!(!closed);
    }

    #[test]
    fn closest_candidate_wins() {
        let pts = vec![(0, Point::new(0.5, 6.0)), (1, Point::new(-0.5, 4.0))];
        let (order, _) = order_side(&pts, Point::origin(), Vector::new(0.0, 1.0), &OrderingParams::default());
        assert_eq!(order[0], 1);
    }

    #[test]
    fn cones_outside_every_triangle_ignored() {
        let pts = vec![(0, Point::new(0.0, 5.0)), (1, Point::new(20.0, 5.0)), (2, Point::new(0.0, -3.0))];
        let (order, _) = order_side(&pts, Point::origin(), Vector::new(0.0, 1.0), &OrderingParams::default());
        assert_eq!(order, vec![0]);
    }

    #[test]
    fn triangle_membership() {
        let apex = Point::origin();
        let dir = Vector::new(0.0, 1.0);
        let phi = 60f64.to_radians();
        assert!(in_triangle(&apex, &dir, &Point::new(0.0, 8.0), phi, 8.0));
        assert!(!in_triangle(&apex, &dir, &Point::new(0.0, 8.01), phi, 8.0));
        assert!(in_triangle(&apex, &dir, &Point::new(1.7, 1.0), phi, 8.0));
        assert!(!in_triangle(&apex, &dir, &Point::new(1.8, 1.0), phi, 8.0));
    }

    #[test]
    fn ring_closes() {
        let n = 16;
        let pts: Vec<(usize, Point)> = (1..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                (i, Point::new(12.0 * a.cos() - 12.0, 12.0 * a.sin()))
            })
            .collect();
        let (order, closed) = order_side(&pts, Point::origin(), Vector::new(0.0, 1.0), &OrderingParams::default());
        assert_eq!(order, (1..n).collect::<Vec<_>>());
        assert!(closed);
    }

    #[test]
    fn order_cones_needs_start_pair() {
        let mut m = GlobalMap::default();
        m.set_origin(Pose2D::new(0.0, 0.0, 0.0)).unwrap();
        for i in 0..2 {
            m.associate(Point::new(-1.5, 5.0 * i as f64 + 6.0), ConeColor::Blue, Point::origin(), 3.0);
        }
        order_cones(&mut m, &OrderingParams::default());
        assert!(m.ordered_left.is_empty());
    }
}
