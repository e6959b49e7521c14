//! Run metrics, computed only from the written artifacts and the track.

use std::collections::BTreeMap;

use racestack_core::geometry::{project_on_polyline, segments_intersect};
use racestack_core::mapping::awareness::midline_offset;
use racestack_core::planning::reference::truth_midline;
use racestack_core::supervisor::AsStatus;
use racestack_core::{ConeColor, MissionKind, Point, TrackDefinition};

use crate::output::{DepthRow, MapRow, SensorRow, TrajectoryRow};

/// Added to the half width before counting an off-track sample.
pub const OFF_TRACK_MARGIN: f64 = 0.15;

/// Flat `key -> number` map, serialized with sorted keys.
pub type RunMetrics = BTreeMap<String, f64>;

pub struct MetricsInput<'a> {
    pub mission: MissionKind,
    pub staging_offset: f64,
    pub min_obs: u32,
    pub track: &'a TrackDefinition,
    pub trajectory: &'a [TrajectoryRow],
    pub sensors: &'a [SensorRow],
    pub depth: &'a [DepthRow],
    pub map: &'a [MapRow],
}

pub fn rms(v: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x * x;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        (s / n as f64).sqrt()
    }
}

/// Nearest-rank percentile of an unsorted sample, `q` in [0, 1].
pub fn percentile(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len());
    s[rank - 1]
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn truth(r: &TrajectoryRow) -> Point {
    Point::new(r.truth_x, r.truth_y)
}

/// Times of forward crossings of segment `ab`, linearly interpolated
/// between ticks.
pub fn crossing_times(rows: &[TrajectoryRow], a: Point, b: Point, forward: &racestack_core::Vector) -> Vec<f64> {
    let mut out = Vec::new();
    for w in rows.windows(2) {
        let (p0, p1) = (truth(&w[0]), truth(&w[1]));
        if (p1 - p0).dot(forward) <= 0.0 || !segments_intersect(p0, p1, a, b) {
            continue;
        }
        let side = |p: &Point| racestack_core::geometry::cross(&(b - a), &(p - a));
        let (s0, s1) = (side(&p0), side(&p1));
        if s0 == 0.0 || s0.signum() == s1.signum() {
            continue;
        }
        let f = s0 / (s0 - s1);
        out.push(w[0].t + f * (w[1].t - w[0].t));
    }
    out
}

/// Start line (and for acceleration the finish line) crossing times of
/// the ground-truth trajectory.
pub fn lap_times(input: &MetricsInput) -> Vec<f64> {
    let t = input.track;
    let (l, r) = t.start_line;
    let dir = t.direction_hint;
    let start = crossing_times(input.trajectory, t.cone(l).position, t.cone(r).position, &dir);
    match input.mission {
        MissionKind::Trackdrive => start.windows(2).map(|w| w[1] - w[0]).collect(),
        MissionKind::Acceleration => {
            let Some((a, b)) = t.finish_line() else {
                return Vec::new();
            };
            let finish = crossing_times(input.trajectory, t.cone(a).position, t.cone(b).position, &dir);
            match (start.first(), finish.first()) {
                (Some(s), Some(f)) if f > s => vec![f - s],
                _ => Vec::new(),
            }
        }
        MissionKind::Skidpad => Vec::new(),
    }
}

/// Time the course starts. On a circuit the staging approach lies off the
/// loop, so samples count from the first start-line crossing.
pub fn course_start(input: &MetricsInput) -> f64 {
    if input.mission != MissionKind::Trackdrive {
        return f64::NEG_INFINITY;
    }
    let t = input.track;
    let (l, r) = t.start_line;
    crossing_times(input.trajectory, t.cone(l).position, t.cone(r).position, &t.direction_hint)
        .first()
        .copied()
        .unwrap_or(f64::INFINITY)
}

/// Distance of each driving sample on the course to the ground-truth
/// midline.
pub fn cross_track_errors(input: &MetricsInput) -> Vec<f64> {
    let (mid, closed) = truth_midline(input.track, input.mission, input.staging_offset);
    if mid.len() < 2 {
        return Vec::new();
    }
    let t0 = course_start(input);
    input
        .trajectory
        .iter()
        .filter(|r| r.status() == Some(AsStatus::Driving) && r.t >= t0)
        .filter_map(|r| project_on_polyline(&truth(r), &mid, closed).map(|p| p.distance))
        .collect()
}

/// True boundaries with the start cone first, as the map stores them.
fn true_boundaries(track: &TrackDefinition) -> (Vec<Point>, Vec<Point>) {
    let (l, r) = track.start_line;
    let side = |seed: usize, color: ConeColor| {
        let mut v = vec![track.cone(seed).position];
        v.extend(track.side(color).iter().map(|c| c.position));
        v
    };
    (side(l, ConeColor::Blue), side(r, ConeColor::Yellow))
}

/// Per-sample off-track flags against the true boundaries. Skidpad has no
/// single corridor and is not evaluated.
pub fn off_track_flags(input: &MetricsInput) -> Vec<bool> {
    if input.mission == MissionKind::Skidpad {
        return vec![false; input.trajectory.len()];
    }
    let (left, right) = true_boundaries(input.track);
    let closed = input.mission == MissionKind::Trackdrive;
    input
        .trajectory
        .iter()
        .map(|r| {
            midline_offset(&truth(r), &left, &right, closed).is_some_and(|(lat, half)| lat > half + OFF_TRACK_MARGIN)
        })
        .collect()
}

/// Distance from each confirmed mapped cone to the nearest true cone of
/// its color.
pub fn map_residuals(input: &MetricsInput) -> Vec<f64> {
    input
        .map
        .iter()
        .filter(|c| c.n_obs >= input.min_obs)
        .filter_map(|c| {
            let color = ConeColor::from_tag(&c.color)?;
            let p = Point::new(c.x, c.y);
            input
                .track
                .cones
                .iter()
                .filter(|t| t.color == color)
                .map(|t| (t.position - p).norm())
                .min_by(f64::total_cmp)
        })
        .collect()
}

/// Per-axis RMS of a receiver's error over its valid samples.
fn receiver_rms(sensors: &[SensorRow], rtk: bool) -> (f64, f64, f64) {
    let errs: Vec<(f64, f64)> = sensors
        .iter()
        .filter(|s| if rtk { s.rtk_valid == 1 } else { s.gnss_valid == 1 })
        .map(|s| {
            if rtk {
                (s.rtk_x - s.truth_x, s.rtk_y - s.truth_y)
            } else {
                (s.gnss_x - s.truth_x, s.gnss_y - s.truth_y)
            }
        })
        .collect();
    let x = rms(errs.iter().map(|e| e.0));
    let y = rms(errs.iter().map(|e| e.1));
    let pooled = rms(errs.iter().flat_map(|e| [e.0, e.1]));
    (x, y, pooled)
}

pub fn status_code(s: AsStatus) -> f64 {
    AsStatus::ALL.iter().position(|x| *x == s).unwrap_or(0) as f64
}

pub fn compute(input: &MetricsInput) -> RunMetrics {
    let mut m = RunMetrics::new();
    let traj = input.trajectory;
    let mut put = |k: &str, v: f64| {
        m.insert(k.to_string(), v);
    };

    let final_status = traj.last().and_then(|r| r.status()).unwrap_or(AsStatus::Off);
    put("ticks", traj.len() as f64);
    put("duration_s", traj.last().map_or(0.0, |r| r.t));
    put("final_status", status_code(final_status));
    put("finished", f64::from(u8::from(final_status == AsStatus::Finished)));

    put("position_rmse", rms(traj.iter().map(|r| (r.est_x - r.truth_x).hypot(r.est_y - r.truth_y))));
    put("position_rmse_x", rms(traj.iter().map(|r| r.est_x - r.truth_x)));
    put("position_rmse_y", rms(traj.iter().map(|r| r.est_y - r.truth_y)));
    put(
        "fix_rmse",
        rms(traj
            .iter()
            .filter(|r| r.gnss_valid == 1)
            .map(|r| (r.gnss_x - r.truth_x).hypot(r.gnss_y - r.truth_y))),
    );
    put(
        "heading_rmse",
        rms(traj.iter().map(|r| racestack_core::normalize_angle(r.est_theta - r.truth_theta))),
    );

    let laps = lap_times(input);
    put("lap_count", laps.len() as f64);
    for (i, t) in laps.iter().enumerate() {
        put(&format!("lap_time_{}", i + 1), *t);
    }
    if !laps.is_empty() {
        put("lap_time_mean", mean(&laps));
        put("lap_time_min", laps.iter().copied().fold(f64::INFINITY, f64::min));
        put("lap_time_max", laps.iter().copied().fold(0.0, f64::max));
    }

    let xte = cross_track_errors(input);
    put("cross_track_mean", mean(&xte));
    put("cross_track_p95", percentile(&xte, 0.95));
    put("cross_track_max", xte.iter().copied().fold(0.0, f64::max));

    let off = off_track_flags(input);
    let events = off.windows(2).filter(|w| !w[0] && w[1]).count() + usize::from(off.first() == Some(&true));
    put("off_track_events", events as f64);
    put("off_track_ticks", off.iter().filter(|&&f| f).count() as f64);

    let res = map_residuals(input);
    put("map_cones", res.len() as f64);
    put("map_residual_mean", mean(&res));
    put("map_residual_max", res.iter().copied().fold(0.0, f64::max));

    let (gx, gy, g) = receiver_rms(input.sensors, false);
    let (rx, ry, r) = receiver_rms(input.sensors, true);
    put("gnss_rms_x", gx);
    put("gnss_rms_y", gy);
    put("gnss_rms", g);
    put("rtk_rms_x", rx);
    put("rtk_rms_y", ry);
    put("rtk_rms", r);

    let near8: Vec<f64> = input
        .depth
        .iter()
        .filter(|d| (7.5..=8.5).contains(&d.true_depth))
        .map(|d| (d.depth - d.true_depth).abs())
        .collect();
    put("depth_samples_8m", near8.len() as f64);
    put("depth_median_abs_error_8m", median(&near8));

    // NaN is not valid JSON
    m.retain(|_, v| v.is_finite());
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_and_median() {
        let v = [5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(median(&v), 3.0);
        assert_eq!(median(&[1.0, 2.0]), 1.5);
        assert_eq!(percentile(&v, 0.95), 5.0);
        assert_eq!(percentile(&v, 0.2), 1.0);
        assert!(percentile(&[], 0.5).is_nan());
    }

    #[test]
    fn rms_basics() {
        assert_eq!(rms([3.0, -3.0]), 3.0);
        assert!(rms(std::iter::empty()).is_nan());
    }
}
