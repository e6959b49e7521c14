//! IOU tracker: frame-to-frame identity by greedy box overlap.

use std::cmp::Ordering;

use crate::model::ConeColor;

use super::camera::{iou, BBox};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerParams {
    /// Minimum IOU for a detection to continue a track.
    pub sigma_iou: f64,
    /// Frames a track survives without a detection. Zero ends a track on
    /// its first miss.
    pub max_missed: u32,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            sigma_iou: 0.3,
            max_missed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDetection {
    pub bbox: BBox,
    pub depth: f64,
    pub color: ConeColor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub last_bbox: BBox,
    pub last_depth: f64,
    pub color: ConeColor,
    pub age: u32,
    pub missed: u32,
}

/// Tracker state as a plain value; ids are never reused.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackerState {
    pub tracks: Vec<Track>,
    pub next_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub detection: usize,
    pub track_id: u64,
    /// True when the detection started a new track.
    pub new_track: bool,
}

/// Greedy association in descending IOU order. Ties go to the lower track
/// id, then the lower detection index. Color mismatches never associate.
pub fn greedy_pairs(tracks: &[Track], detections: &[BoxDetection], sigma_iou: f64) -> Vec<(usize, usize)> {
    let matrix: Vec<Vec<Option<f64>>> = tracks
        .iter()
        .map(|t| {
            detections
                .iter()
                .map(|d| (t.color == d.color).then(|| iou(&t.last_bbox, &d.bbox)))
                .collect()
        })
        .collect();
    let ids: Vec<u64> = tracks.iter().map(|t| t.track_id).collect();
    greedy_assign(&matrix, &ids, sigma_iou)
}

/// The greedy rule on an explicit `tracks x detections` IOU matrix; `None`
/// marks vetoed pairs. Returns `(track index, detection index)` pairs in the
/// order they were accepted.
pub fn greedy_assign(ious: &[Vec<Option<f64>>], track_ids: &[u64], sigma_iou: f64) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, u64, usize, usize)> = Vec::new();
    for (ti, row) in ious.iter().enumerate() {
        for (di, v) in row.iter().enumerate() {
            if let Some(v) = *v {
                if v >= sigma_iou {
                    candidates.push((v, track_ids[ti], ti, di));
                }
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.3.cmp(&b.3))
    });
    let ndet = ious.first().map_or(0, Vec::len);
    let mut track_used = vec![false; ious.len()];
    let mut det_used = vec![false; ndet];
    let mut pairs = Vec::new();
    for (_, _, ti, di) in candidates {
        if !track_used[ti] && !det_used[di] {
            track_used[ti] = true;
            det_used[di] = true;
            pairs.push((ti, di));
        }
    }
    pairs
}

pub fn tracker_step(
    state: &TrackerState,
    detections: &[BoxDetection],
    params: &TrackerParams,
) -> (TrackerState, Vec<Assignment>) {
    let pairs = greedy_pairs(&state.tracks, detections, params.sigma_iou);
    let mut matched_track = vec![None; state.tracks.len()];
    for &(ti, di) in &pairs {
        matched_track[ti] = Some(di);
    }
    let mut det_track: Vec<Option<u64>> = vec![None; detections.len()];

    let mut tracks = Vec::with_capacity(state.tracks.len() + detections.len());
    for (ti, t) in state.tracks.iter().enumerate() {
        match matched_track[ti] {
            Some(di) => {
                let d = &detections[di];
                det_track[di] = Some(t.track_id);
                tracks.push(Track {
                    last_bbox: d.bbox,
                    last_depth: d.depth,
                    age: t.age + 1,
                    missed: 0,
                    ..*t
                });
            }
            None => {
                if t.missed < params.max_missed {
                    tracks.push(Track {
                        missed: t.missed + 1,
                        ..*t
                    });
                }
            }
        }
    }

    let mut next_id = state.next_id;
    let mut assignments = Vec::with_capacity(detections.len());
    for (di, d) in detections.iter().enumerate() {
        match det_track[di] {
            Some(id) => assignments.push(Assignment {
                detection: di,
                track_id: id,
                new_track: false,
            }),
            None => {
                let id = next_id;
                next_id += 1;
                tracks.push(Track {
                    track_id: id,
                    last_bbox: d.bbox,
                    last_depth: d.depth,
                    color: d.color,
                    age: 1,
                    missed: 0,
                });
                assignments.push(Assignment {
                    detection: di,
                    track_id: id,
                    new_track: true,
                });
            }
        }
    }
    (TrackerState { tracks, next_id }, assignments)
}
