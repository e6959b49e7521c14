//! Run configuration: command-line flags layered over an optional TOML file
//! layered over the library defaults.

use std::path::{Path, PathBuf};

use racestack_core::alignment::RefineMode;
use racestack_core::ekf::JacobianForm;
use racestack_core::supervisor::{Executor, FaultKind, FaultSpec, PipelineConfig, PositionSource, Stage};
use racestack_core::MissionKind;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub track: PathBuf,
    pub out: PathBuf,
    pub executor: Executor,
    pub pipeline: PipelineConfig,
}

/// Flags of the `run` subcommand; `None` defers to the file or default.
#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub track: PathBuf,
    pub mission: Option<String>,
    pub seed: Option<u64>,
    pub laps: Option<u32>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub parallel: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub run: RunSection,
    pub vehicle: VehicleSection,
    pub sensors: SensorSection,
    pub ekf: EkfSection,
    pub controller: ControllerSection,
    pub planner: PlannerSection,
    pub mapping: MappingSection,
    pub tracker: TrackerSection,
    pub alignment: AlignmentSection,
    pub faults: Vec<FaultEntry>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mission: Option<String>,
    pub seed: Option<u64>,
    pub laps: Option<u32>,
    pub max_ticks: Option<u64>,
    /// `rtk` or `gnss`.
    pub position_source: Option<String>,
    /// `sequential` or `parallel`.
    pub executor: Option<String>,
    pub staging_offset: Option<f64>,
    pub stale_ticks: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleSection {
    pub wheelbase: Option<f64>,
    pub max_steer: Option<f64>,
    pub max_steer_rate: Option<f64>,
    pub v_max: Option<f64>,
    pub a_lat_max: Option<f64>,
    pub a_long_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    /// Switch every noise source off before applying the other keys.
    pub noiseless: Option<bool>,
    pub gnss_sigma: Option<f64>,
    pub rtk_sigma: Option<f64>,
    pub gnss_dropout_prob: Option<f64>,
    pub rtk_dropout_prob: Option<f64>,
    pub dropout_hold_s: Option<f64>,
    pub heading_sigma_deg: Option<f64>,
    pub yaw_rate_sigma: Option<f64>,
    pub wheel_speed_sigma: Option<f64>,
    pub depth_bias_at_8m: Option<f64>,
    pub depth_noise_sigma_at_8m: Option<f64>,
    pub depth_lambda: Option<f64>,
    pub blue_bias_multiplier: Option<f64>,
    pub yellow_bias_multiplier: Option<f64>,
    pub outlier_prob: Option<f64>,
    pub camera_fov_deg: Option<f64>,
    pub camera_range: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfSection {
    /// Diagonal of Q: x, y, theta, nu.
    pub q: Option<[f64; 4]>,
    /// Diagonal of R: x, y, theta, nu, omega.
    pub r: Option<[f64; 5]>,
    /// `full` or `literal`.
    pub jacobian: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub l_low: Option<f64>,
    pub l_high: Option<f64>,
    pub accel_gain: Option<f64>,
    pub time_gain: Option<f64>,
    pub literal_lookahead: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub discovery_speed: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingSection {
    pub max_range: Option<f64>,
    pub min_obs: Option<u32>,
    pub gate_r0: Option<f64>,
    pub gate_k: Option<f64>,
    pub gate_minor_ratio: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerSection {
    pub sigma_iou: Option<f64>,
    pub max_missed: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentSection {
    pub iterations: Option<usize>,
    pub step_sigma: Option<f64>,
    pub decay: Option<f64>,
    /// `residual` or `objective`.
    pub mode: Option<String>,
    pub refine_every: Option<u64>,
    pub skidpad_center_radius: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEntry {
    pub stage: String,
    pub tick: u64,
    /// `error` or `silent`.
    pub kind: String,
}

fn set<T: Copy>(target: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *target = v;
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn parse_file_config(text: &str) -> Result<FileConfig, CliError> {
    toml::from_str(text).map_err(|e| bad(e.to_string()))
}

pub fn load_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_file_config(&text)
}

impl FileConfig {
    /// Applies the file on top of `cfg`.
    pub fn apply(&self, cfg: &mut PipelineConfig) -> Result<(), CliError> {
        let r = &self.run;
        set(&mut cfg.seed, r.seed);
        set(&mut cfg.laps, r.laps);
        set(&mut cfg.max_ticks, r.max_ticks);
        set(&mut cfg.staging_offset, r.staging_offset);
        set(&mut cfg.stale_ticks, r.stale_ticks);
        if let Some(m) = &r.mission {
            cfg.mission = parse_mission(m)?;
        }
        if let Some(p) = &r.position_source {
            cfg.position_source = match p.as_str() {
                "rtk" => PositionSource::Rtk,
                "gnss" => PositionSource::Gnss,
                other => return Err(bad(format!("unknown position_source `{other}`"))),
            };
        }

        let v = &self.vehicle;
        set(&mut cfg.vehicle.wheelbase, v.wheelbase);
        set(&mut cfg.vehicle.max_steer, v.max_steer);
        set(&mut cfg.vehicle.max_steer_rate, v.max_steer_rate);
        set(&mut cfg.vehicle.v_max, v.v_max);
        set(&mut cfg.vehicle.a_lat_max, v.a_lat_max);
        set(&mut cfg.vehicle.a_long_max, v.a_long_max);
        cfg.pure_pursuit.wheelbase = cfg.vehicle.wheelbase;

        let s = &self.sensors;
        if s.noiseless == Some(true) {
            cfg.sensors = racestack_core::sim::SensorConfig {
                camera_fov: cfg.sensors.camera_fov,
                camera_range: cfg.sensors.camera_range,
                ..racestack_core::sim::SensorConfig::noiseless()
            };
        }
        let c = &mut cfg.sensors;
        set(&mut c.gnss_sigma, s.gnss_sigma);
        set(&mut c.rtk_sigma, s.rtk_sigma);
        set(&mut c.gnss_dropout_prob, s.gnss_dropout_prob);
        set(&mut c.rtk_dropout_prob, s.rtk_dropout_prob);
        set(&mut c.dropout_hold_s, s.dropout_hold_s);
        set(&mut c.heading_sigma, s.heading_sigma_deg.map(f64::to_radians));
        set(&mut c.yaw_rate_sigma, s.yaw_rate_sigma);
        set(&mut c.wheel_speed_sigma, s.wheel_speed_sigma);
        set(&mut c.depth_bias_at_8m, s.depth_bias_at_8m);
        set(&mut c.depth_noise_sigma_at_8m, s.depth_noise_sigma_at_8m);
        set(&mut c.depth_lambda, s.depth_lambda);
        set(&mut c.blue_bias_multiplier, s.blue_bias_multiplier);
        set(&mut c.yellow_bias_multiplier, s.yellow_bias_multiplier);
        set(&mut c.outlier_prob, s.outlier_prob);
        set(&mut c.camera_fov, s.camera_fov_deg.map(f64::to_radians));
        set(&mut c.camera_range, s.camera_range);

        let e = &self.ekf;
        if let Some(q) = e.q {
            for (i, v) in q.into_iter().enumerate() {
                cfg.noise.q[(i, i)] = v;
            }
        }
        if let Some(r) = e.r {
            for (i, v) in r.into_iter().enumerate() {
                cfg.noise.r[(i, i)] = v;
            }
        }
        if let Some(j) = &e.jacobian {
            cfg.jacobian = match j.as_str() {
                "full" => JacobianForm::Full,
                "literal" => JacobianForm::Literal,
                other => return Err(bad(format!("unknown jacobian `{other}`"))),
            };
        }

        let k = &self.controller;
        set(&mut cfg.pure_pursuit.l_low, k.l_low);
        set(&mut cfg.pure_pursuit.l_high, k.l_high);
        set(&mut cfg.pure_pursuit.accel_gain, k.accel_gain);
        set(&mut cfg.pure_pursuit.time_gain, k.time_gain);
        set(&mut cfg.pure_pursuit.literal_lookahead, k.literal_lookahead);

        set(&mut cfg.discovery_speed, self.planner.discovery_speed);

        let m = &self.mapping;
        set(&mut cfg.mapping_max_range, m.max_range);
        set(&mut cfg.min_obs, m.min_obs);
        set(&mut cfg.gate.r0, m.gate_r0);
        set(&mut cfg.gate.k, m.gate_k);
        set(&mut cfg.gate.minor_ratio, m.gate_minor_ratio);

        set(&mut cfg.tracker.sigma_iou, self.tracker.sigma_iou);
        set(&mut cfg.tracker.max_missed, self.tracker.max_missed);

        let a = &self.alignment;
        set(&mut cfg.refine.iterations, a.iterations);
        set(&mut cfg.refine.step_sigma, a.step_sigma);
        set(&mut cfg.refine.decay, a.decay);
        set(&mut cfg.refine_every, a.refine_every);
        set(&mut cfg.skidpad_center_radius, a.skidpad_center_radius);
        if let Some(mode) = &a.mode {
            cfg.refine.mode = match mode.as_str() {
                "residual" => RefineMode::Residual,
                "objective" => RefineMode::Objective,
                other => return Err(bad(format!("unknown alignment mode `{other}`"))),
            };
        }

        for f in &self.faults {
            let stage = Stage::from_name(&f.stage).ok_or_else(|| bad(format!("unknown stage `{}`", f.stage)))?;
            let kind = match f.kind.as_str() {
                "error" => FaultKind::Error,
                "silent" => FaultKind::Silent,
                other => return Err(bad(format!("unknown fault kind `{other}`"))),
            };
            cfg.faults.push(FaultSpec { stage, tick: f.tick, kind });
        }
        Ok(())
    }

    pub fn executor(&self) -> Result<Option<Executor>, CliError> {
        match self.run.executor.as_deref() {
            None => Ok(None),
            Some("sequential") => Ok(Some(Executor::Sequential)),
            Some("parallel") => Ok(Some(Executor::Parallel)),
            Some(other) => Err(bad(format!("unknown executor `{other}`"))),
        }
    }
}

pub fn parse_mission(s: &str) -> Result<MissionKind, CliError> {
    MissionKind::from_name(s).ok_or_else(|| bad(format!("unknown mission `{s}`")))
}

/// Resolves flags, file and defaults. Fails if a referenced file is missing.
pub fn resolve(args: &RunArgs) -> Result<RunConfig, CliError> {
    if !args.track.is_file() {
        return Err(bad(format!("track file {} not found", args.track.display())));
    }
    let file = match &args.config {
        Some(p) => load_file_config(p)?,
        None => FileConfig::default(),
    };
    let mission = match (&args.mission, &file.run.mission) {
        (Some(m), _) | (None, Some(m)) => parse_mission(m)?,
        (None, None) => MissionKind::Trackdrive,
    };
    let mut cfg = PipelineConfig::new(mission, 1, 0);
    file.apply(&mut cfg)?;
    cfg.mission = mission;
    set(&mut cfg.seed, args.seed);
    set(&mut cfg.laps, args.laps);
    cfg.validate().map_err(|e| bad(e.to_string()))?;
    let executor = if args.parallel {
        Executor::Parallel
    } else {
        file.executor()?.unwrap_or_default()
    };
    Ok(RunConfig {
        track: args.track.clone(),
        out: args.out.clone(),
        executor,
        pipeline: cfg,
    })
}
