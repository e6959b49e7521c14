//! Autonomous racing stack for cone-delimited circuits.
//!
//! The crate covers the full loop of a driverless race car in simulation:
//! a ground-truth vehicle and sensor simulator, pinhole camera geometry with
//! an IOU tracker, an EKF on the kinematic bicycle model, a cone map with
//! ordering and track awareness, known-map alignment, spline based path
//! planning, regulated pure pursuit control, and a master-node supervisor
//! that runs everything as a deterministic 10 Hz pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod control;
pub mod ekf;
pub mod geometry;
pub mod mapping;
pub mod model;
pub mod perception;
pub mod planning;
pub mod sim;
pub mod supervisor;
pub mod track_io;
pub mod trackgen;

pub use model::{
    normalize_angle, Cone, ConeColor, MissionKind, Point, Pose2D, TrackDefinition, TrackError,
    Vector, VehicleParams,
};
