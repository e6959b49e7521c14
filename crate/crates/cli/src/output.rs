//! Run artifacts and their CSV row types.

use std::path::Path;

use racestack_core::supervisor::{AsStatus, PipelineSnapshot, PositionSource};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::CliError;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SENSORS_FILE: &str = "sensors.csv";
pub const DEPTH_FILE: &str = "depth.csv";
pub const FLAGS_FILE: &str = "flags.csv";
pub const MAP_FILE: &str = "map.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const TRACK_FILE: &str = "track.csv";
pub const RUN_FILE: &str = "run.toml";

/// One line of `trajectory.csv`. `gnss_*` is the fix fed to the EKF and
/// `status` is the status at the end of the tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub tick: u64,
    pub t: f64,
    pub truth_x: f64,
    pub truth_y: f64,
    pub truth_theta: f64,
    pub truth_v: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_theta: f64,
    pub est_v: f64,
    pub gnss_x: f64,
    pub gnss_y: f64,
    pub gnss_valid: u8,
    pub cmd_accel: f64,
    pub cmd_steer: f64,
    pub cmd_brake: f64,
    pub status: String,
}

impl TrajectoryRow {
    pub fn from_snapshot(s: &PipelineSnapshot, period: f64, source: PositionSource) -> Self {
        let b = &s.sensors.msg;
        let fix = match source {
            PositionSource::Rtk => b.rtk,
            PositionSource::Gnss => b.gnss,
        };
        let est = &s.estimate.msg;
        let cmd = &s.command.msg;
        Self {
            tick: s.tick,
            t: s.tick as f64 * period,
            truth_x: b.truth.pose.x,
            truth_y: b.truth.pose.y,
            truth_theta: b.truth.pose.theta,
            truth_v: b.truth.speed,
            est_x: est.pose.x,
            est_y: est.pose.y,
            est_theta: est.pose.theta,
            est_v: est.speed,
            gnss_x: fix.x,
            gnss_y: fix.y,
            gnss_valid: fix.valid as u8,
            cmd_accel: cmd.accel,
            cmd_steer: cmd.steering,
            cmd_brake: cmd.brake,
            status: s.next_status.name().to_string(),
        }
    }

    pub fn status(&self) -> Option<AsStatus> {
        AsStatus::from_name(&self.status)
    }
}

/// Both position receivers against the truth, every tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorRow {
    pub tick: u64,
    pub truth_x: f64,
    pub truth_y: f64,
    pub gnss_x: f64,
    pub gnss_y: f64,
    pub gnss_valid: u8,
    pub rtk_x: f64,
    pub rtk_y: f64,
    pub rtk_valid: u8,
}

impl SensorRow {
    pub fn from_snapshot(s: &PipelineSnapshot) -> Self {
        let b = &s.sensors.msg;
        Self {
            tick: s.tick,
            truth_x: b.truth.pose.x,
            truth_y: b.truth.pose.y,
            gnss_x: b.gnss.x,
            gnss_y: b.gnss.y,
            gnss_valid: b.gnss.valid as u8,
            rtk_x: b.rtk.x,
            rtk_y: b.rtk.y,
            rtk_valid: b.rtk.valid as u8,
        }
    }
}

/// One simulated detection's measured and true depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub tick: u64,
    pub cone_id: usize,
    pub true_depth: f64,
    pub depth: f64,
}

impl DepthRow {
    pub fn from_snapshot(s: &PipelineSnapshot) -> impl Iterator<Item = DepthRow> + '_ {
        s.sensors.msg.detections.iter().map(move |d| DepthRow {
            tick: s.tick,
            cone_id: d.true_cone_id,
            true_depth: d.true_depth,
            depth: d.depth,
        })
    }
}

/// One line of `map.csv`, world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub color: String,
    pub x: f64,
    pub y: f64,
    pub map_id: usize,
    pub n_obs: u32,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}
