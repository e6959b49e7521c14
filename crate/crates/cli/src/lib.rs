//! Mission runner, track generator and plotting behind the `racestack`
//! binary.

pub mod config;
pub mod metrics;
pub mod output;
pub mod plot;

use std::path::{Path, PathBuf};

use racestack_core::supervisor::{self, AsStatus, PipelineConfig, SupervisorError};
use racestack_core::track_io::{format_track, load_track, parse_track};
use racestack_core::trackgen::{generate_track, TrackGenParams};
use racestack_core::{MissionKind, TrackDefinition, TrackError};
use serde::{Deserialize, Serialize};

use config::{RunArgs, RunConfig};
use metrics::{MetricsInput, RunMetrics};
use output::*;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("track: {0}")]
    Track(#[from] TrackError),
    #[error(transparent)]
    Supervisor(#[from] SupervisorError),
}

pub const EXIT_FINISHED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_EMERGENCY: i32 = 2;

/// Exit code of a completed run. Anything but Finished is an emergency
/// stop, including a run that never left Ready.
pub fn exit_code(status: AsStatus) -> i32 {
    if status == AsStatus::Finished {
        EXIT_FINISHED
    } else {
        EXIT_EMERGENCY
    }
}

/// Run parameters the plot and metrics need, stored next to the logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub mission: String,
    pub seed: u64,
    pub laps: u32,
    pub staging_offset: f64,
    pub min_obs: u32,
}

impl RunInfo {
    fn new(cfg: &PipelineConfig) -> Self {
        Self {
            mission: cfg.mission.name().to_string(),
            seed: cfg.seed,
            laps: cfg.laps,
            staging_offset: cfg.staging_offset,
            min_obs: cfg.min_obs,
        }
    }

    pub fn mission(&self) -> Result<MissionKind, CliError> {
        config::parse_mission(&self.mission)
    }
}

/// Awareness flags per tick, as raised by the pipeline itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagRow {
    pub tick: u64,
    pub lap_count: u32,
    pub off_track: u8,
    pub finish_reached: u8,
}

/// Everything a run writes, before it is written.
#[derive(Debug, Clone)]
pub struct RunLogs {
    pub status: AsStatus,
    pub info: RunInfo,
    pub track: TrackDefinition,
    pub trajectory: Vec<TrajectoryRow>,
    pub sensors: Vec<SensorRow>,
    pub depth: Vec<DepthRow>,
    pub flags: Vec<FlagRow>,
    pub map_csv: String,
}

impl RunLogs {
    pub fn map_rows(&self) -> Result<Vec<MapRow>, CliError> {
        let mut r = csv::Reader::from_reader(self.map_csv.as_bytes());
        r.deserialize()
            .map(|row| {
                row.map_err(|e| CliError::Csv {
                    path: MAP_FILE.into(),
                    message: e.to_string(),
                })
            })
            .collect()
    }

    pub fn metrics(&self) -> Result<RunMetrics, CliError> {
        let map = self.map_rows()?;
        let mut m = metrics::compute(&MetricsInput {
            mission: self.info.mission()?,
            staging_offset: self.info.staging_offset,
            min_obs: self.info.min_obs,
            track: &self.track,
            trajectory: &self.trajectory,
            sensors: &self.sensors,
            depth: &self.depth,
            map: &map,
        });
        add_flag_metrics(&mut m, &self.flags);
        Ok(m)
    }
}

fn add_flag_metrics(m: &mut RunMetrics, flags: &[FlagRow]) {
    let n = flags.iter().filter(|f| f.off_track == 1).count();
    m.insert("off_track_flag_ticks".into(), n as f64);
    m.insert(
        "awareness_lap_count".into(),
        flags.last().map_or(0.0, |f| f64::from(f.lap_count)),
    );
}

/// Runs the pipeline in memory. The track doubles as the reference map of
/// known-map missions.
pub fn simulate(cfg: &RunConfig, track: &TrackDefinition) -> Result<RunLogs, CliError> {
    let pc = &cfg.pipeline;
    let period = pc.sensors.sample_period();
    let mut trajectory = Vec::new();
    let mut sensors = Vec::new();
    let mut depth = Vec::new();
    let mut flags = Vec::new();
    let outcome = supervisor::run(pc, track, Some(track), cfg.executor, |s| {
        trajectory.push(TrajectoryRow::from_snapshot(s, period, pc.position_source));
        sensors.push(SensorRow::from_snapshot(s));
        depth.extend(DepthRow::from_snapshot(s));
        let a = &s.awareness.msg;
        flags.push(FlagRow {
            tick: s.tick,
            lap_count: a.lap_count,
            off_track: a.off_track as u8,
            finish_reached: a.finish_reached as u8,
        });
    })?;
    Ok(RunLogs {
        status: outcome.status,
        info: RunInfo::new(pc),
        track: track.clone(),
        trajectory,
        sensors,
        depth,
        flags,
        map_csv: outcome.state.map.to_csv(),
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_run(dir: &Path, logs: &RunLogs) -> Result<RunMetrics, CliError> {
    create_dir(dir)?;
    let metrics = logs.metrics()?;
    write_csv(&dir.join(TRAJECTORY_FILE), &logs.trajectory)?;
    write_csv(&dir.join(SENSORS_FILE), &logs.sensors)?;
    write_csv(&dir.join(DEPTH_FILE), &logs.depth)?;
    write_csv(&dir.join(FLAGS_FILE), &logs.flags)?;
    write_text(&dir.join(MAP_FILE), &logs.map_csv)?;
    write_text(&dir.join(TRACK_FILE), &format_track(&logs.track)?)?;
    let info = toml::to_string(&logs.info).map_err(|e| CliError::Config(e.to_string()))?;
    write_text(&dir.join(RUN_FILE), &info)?;
    write_text(&dir.join(METRICS_FILE), &metrics_json(&metrics))?;
    Ok(metrics)
}

pub fn metrics_json(m: &RunMetrics) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("finite numbers serialize");
    s.push('\n');
    s
}

/// Rebuilds the metrics from the files of a run directory.
pub fn recompute_metrics(dir: &Path) -> Result<RunMetrics, CliError> {
    let info: RunInfo = toml::from_str(&read_text(&dir.join(RUN_FILE))?).map_err(|e| CliError::Config(e.to_string()))?;
    let track = parse_track(&read_text(&dir.join(TRACK_FILE))?)?;
    let trajectory: Vec<TrajectoryRow> = read_csv(&dir.join(TRAJECTORY_FILE))?;
    let sensors: Vec<SensorRow> = read_csv(&dir.join(SENSORS_FILE))?;
    let depth: Vec<DepthRow> = read_csv(&dir.join(DEPTH_FILE))?;
    let flags: Vec<FlagRow> = read_csv(&dir.join(FLAGS_FILE))?;
    let map: Vec<MapRow> = read_csv(&dir.join(MAP_FILE))?;
    let mut m = metrics::compute(&MetricsInput {
        mission: info.mission()?,
        staging_offset: info.staging_offset,
        min_obs: info.min_obs,
        track: &track,
        trajectory: &trajectory,
        sensors: &sensors,
        depth: &depth,
        map: &map,
    });
    add_flag_metrics(&mut m, &flags);
    Ok(m)
}

/// `run`: simulates, writes the artifacts, and maps the final status to an
/// exit code. Config errors leave the output directory untouched.
pub fn cmd_run(args: &RunArgs) -> Result<i32, CliError> {
    let cfg = config::resolve(args)?;
    let track = load_track(&cfg.track)?;
    let logs = simulate(&cfg, &track)?;
    write_run(&cfg.out, &logs)?;
    Ok(exit_code(logs.status))
}

#[derive(Debug, Clone)]
pub struct GenTrackArgs {
    pub seed: u64,
    pub kind: String,
    pub out: PathBuf,
    pub width: Option<f64>,
    pub cone_spacing: Option<f64>,
    pub min_radius: Option<f64>,
    pub length: Option<f64>,
}

pub fn cmd_gen_track(args: &GenTrackArgs) -> Result<i32, CliError> {
    let kind = config::parse_mission(&args.kind)?;
    let mut p = TrackGenParams::for_kind(kind);
    for (dst, src) in [
        (&mut p.width, args.width),
        (&mut p.cone_spacing, args.cone_spacing),
        (&mut p.min_radius, args.min_radius),
        (&mut p.length, args.length),
    ] {
        if let Some(v) = src {
            *dst = v;
        }
    }
    let track = generate_track(args.seed, kind, &p)?;
    write_text(&args.out, &format_track(&track)?)?;
    Ok(0)
}

pub fn cmd_plot(run_dir: &Path, out: &Path) -> Result<i32, CliError> {
    let svg = render_run_dir(run_dir)?;
    write_text(out, &svg)?;
    Ok(0)
}

pub fn render_run_dir(dir: &Path) -> Result<String, CliError> {
    let info: RunInfo = toml::from_str(&read_text(&dir.join(RUN_FILE))?).map_err(|e| CliError::Config(e.to_string()))?;
    let track = parse_track(&read_text(&dir.join(TRACK_FILE))?)?;
    let trajectory: Vec<TrajectoryRow> = read_csv(&dir.join(TRAJECTORY_FILE))?;
    let sensors: Vec<SensorRow> = read_csv(&dir.join(SENSORS_FILE))?;
    let depth: Vec<DepthRow> = read_csv(&dir.join(DEPTH_FILE))?;
    Ok(plot::render(&plot::PlotInput {
        mission: info.mission()?,
        staging_offset: info.staging_offset,
        track: &track,
        trajectory: &trajectory,
        sensors: &sensors,
        depth: &depth,
    }))
}
