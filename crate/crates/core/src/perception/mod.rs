//! Non-learned half of the vision pipeline: pinhole geometry, the IOU
//! tracker and bird's-eye cone positioning.

pub mod camera;
pub mod tracker;

use crate::model::{ConeColor, Vector};

pub use camera::{backproject, iou, project, BBox, CameraError, CameraIntrinsics, CameraMount};
pub use tracker::{tracker_step, Assignment, BoxDetection, Track, TrackerParams, TrackerState};

/// Cone position relative to the vehicle, `(forward, left)` in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeObservation {
    pub track_id: u64,
    pub position: Vector,
    pub color: ConeColor,
}

/// Bird's-eye positions of the tracks updated this frame. The bbox center is
/// back-projected at the tracked depth and the vertical component dropped.
pub fn cones_birdseye(
    tracks: &[Track],
    intr: &CameraIntrinsics,
    mount: &CameraMount,
) -> Vec<ConeObservation> {
    tracks
        .iter()
        .filter(|t| t.missed == 0 && t.last_depth > 0.0)
        .filter_map(|t| {
            let p = backproject(&t.last_bbox.center(), t.last_depth, intr).ok()?;
            let position = mount.camera_to_vehicle(&p);
            (position.x > 0.0).then_some(ConeObservation {
                track_id: t.track_id,
                position,
                color: t.color,
            })
        })
        .collect()
}
