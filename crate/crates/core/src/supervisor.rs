//! Master node: status machine, node health and the deterministic 10 Hz
//! pipeline sense, perceive, localize, map/align, plan, control, actuate.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::alignment::{apply, estimate_transform, refine, AlignmentError, RefineParams, Transform2x2};
use crate::control::{control_tick, control_tick_from, nearest_waypoint_after, ControlCommand, PurePursuitParams};
use crate::ekf::{ControlInput, Ekf, EkfState, JacobianForm, Measurement, NoiseConfig};
use crate::mapping::{awareness_update, order_cones, AwarenessParams, AwarenessState, GateParams, GlobalMap, OrderingParams};
use crate::model::{ConeColor, MissionKind, Point, Pose2D, TrackDefinition, VehicleParams};
use crate::perception::{cones_birdseye, tracker_step, BoxDetection, ConeObservation, TrackerParams, TrackerState};
use crate::planning::reference::{acceleration_path, skidpad_path};
use crate::planning::{build_plan, global_plan, plan_tick, PathPlan, PlanMode, PlannerParams};
use crate::sim::{
    render_cones, sample_imu, sample_wheel_speed, step_dynamics, Camera, Detection, GnssFix, GnssReceiver, ImuSample,
    SensorConfig, TrueVehicleState, WheelSpeed,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AsStatus {
    #[default]
    Off,
    Ready,
    Driving,
    Finished,
    EmergencyBrake,
}

impl AsStatus {
    pub const ALL: [AsStatus; 5] = [Self::Off, Self::Ready, Self::Driving, Self::Finished, Self::EmergencyBrake];

    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Finished | Self::EmergencyBrake)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Off => "off",
            Self::Ready => "ready",
            Self::Driving => "driving",
            Self::Finished => "finished",
            Self::EmergencyBrake => "emergency_brake",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatusEvent {
    Configure,
    Go,
    Finish,
    Fault,
}

impl StatusEvent {
    pub const ALL: [StatusEvent; 4] = [Self::Configure, Self::Go, Self::Finish, Self::Fault];
}

/// The whole transition graph. Anything not listed is a self loop.
pub fn transition(status: AsStatus, event: StatusEvent) -> AsStatus {
    use AsStatus::*;
    match (status, event) {
        (Off, StatusEvent::Configure) => Ready,
        (Ready, StatusEvent::Go) => Driving,
        (Driving, StatusEvent::Finish) => Finished,
        (Driving, StatusEvent::Fault) => EmergencyBrake,
        (s, _) => s,
    }
}

/// Vehicle-side state variables the master node reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MissionFlags {
    pub configured: bool,
    pub go: bool,
    /// Reported by the VCU when the wheels are not turning.
    pub standstill: bool,
    pub tick_cap: bool,
}

pub fn update_status(status: AsStatus, flags: &MissionFlags, awareness: &AwarenessState, health: &NodeHealth) -> AsStatus {
    let event = match status {
        AsStatus::Off => flags.configured.then_some(StatusEvent::Configure),
        AsStatus::Ready => (flags.go && health.all_ok()).then_some(StatusEvent::Go),
        AsStatus::Driving => {
            if !health.all_ok() || flags.tick_cap {
                Some(StatusEvent::Fault)
            } else if awareness.finish_reached && flags.standstill {
                Some(StatusEvent::Finish)
            } else {
                None
            }
        }
        AsStatus::Finished | AsStatus::EmergencyBrake => None,
    };
    event.map_or(status, |e| transition(status, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Sense,
    Perceive,
    Localize,
    Map,
    Plan,
    Control,
    Actuate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Self::Sense,
        Self::Perceive,
        Self::Localize,
        Self::Map,
        Self::Plan,
        Self::Control,
        Self::Actuate,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sense => "sense",
            Self::Perceive => "perceive",
            Self::Localize => "localize",
            Self::Map => "map",
            Self::Plan => "plan",
            Self::Control => "control",
            Self::Actuate => "actuate",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StageStatus {
    #[default]
    Ok,
    Stale,
    Faulted,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeHealth {
    pub status: [StageStatus; 7],
    pub last_update: [u64; 7],
}

impl NodeHealth {
    pub fn get(&self, stage: Stage) -> StageStatus {
        self.status[stage.index()]
    }

    pub fn all_ok(&self) -> bool {
        self.status.iter().all(|s| *s == StageStatus::Ok)
    }

    /// The stage produced fresh output (or was not scheduled) at `tick`.
    fn touch(&mut self, stage: Stage, tick: u64) {
        self.last_update[stage.index()] = tick;
    }

    fn fault(&mut self, stage: Stage) {
        self.status[stage.index()] = StageStatus::Faulted;
    }

    /// Faults are sticky; otherwise a stage is stale after `limit` missed
    /// ticks.
    fn refresh(&mut self, tick: u64, limit: u64) {
        for i in 0..7 {
            if self.status[i] == StageStatus::Faulted {
                continue;
            }
            self.status[i] = if tick.saturating_sub(self.last_update[i]) > limit {
                StageStatus::Stale
            } else {
                StageStatus::Ok
            };
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    /// The stage returns an error at the given tick.
    Error,
    /// The stage stops producing output from the given tick on.
    Silent,
}

/// Injected failure, for exercising the emergency path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultSpec {
    pub stage: Stage,
    pub tick: u64,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PositionSource {
    #[default]
    Rtk,
    Gnss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Executor {
    #[default]
    Sequential,
    /// Perception and localization run on separate threads.
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mission: MissionKind,
    pub laps: u32,
    pub seed: u64,
    pub vehicle: VehicleParams,
    pub sensors: SensorConfig,
    pub position_source: PositionSource,
    pub noise: NoiseConfig,
    pub jacobian: JacobianForm,
    pub tracker: TrackerParams,
    pub camera: Camera,
    pub gate: GateParams,
    /// Observations farther than this (measured) are not mapped. Beyond it
    /// the short depth bias can exceed the association gate.
    pub mapping_max_range: f64,
    pub min_obs: u32,
    pub pure_pursuit: PurePursuitParams,
    pub discovery_speed: f64,
    /// Distance of the staging pose behind the start line.
    pub staging_offset: f64,
    pub refine: RefineParams,
    /// Ticks between alignment refinements.
    pub refine_every: u64,
    pub stale_ticks: u64,
    pub max_ticks: u64,
    pub skidpad_center_radius: f64,
    pub faults: Vec<FaultSpec>,
}

impl PipelineConfig {
    pub fn new(mission: MissionKind, laps: u32, seed: u64) -> Self {
        Self {
            mission,
            laps,
            seed,
            vehicle: VehicleParams::default(),
            sensors: SensorConfig::default(),
            position_source: PositionSource::Rtk,
            noise: NoiseConfig::default(),
            jacobian: JacobianForm::Full,
            tracker: TrackerParams::default(),
            camera: Camera::default(),
            gate: GateParams::default(),
            mapping_max_range: 6.5,
            min_obs: 2,
            pure_pursuit: PurePursuitParams::default(),
            discovery_speed: 5.0,
            staging_offset: 6.0,
            refine: RefineParams::default(),
            refine_every: 10,
            stale_ticks: 3,
            max_ticks: 12_000,
            skidpad_center_radius: 2.0,
            faults: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SupervisorError> {
        let bad = |m: String| Err(SupervisorError::InvalidConfig(m));
        if let Err(e) = self.vehicle.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.sensors.validate() {
            return bad(e);
        }
        if let Err(e) = self.noise.validate() {
            return bad(e);
        }
        if let Err(e) = self.pure_pursuit.validate() {
            return bad(e);
        }
        if let Err(e) = self.camera.intrinsics.validate() {
            return bad(e.to_string());
        }
        if self.mission == MissionKind::Trackdrive && self.laps == 0 {
            return bad("trackdrive needs at least one lap".into());
        }
        if !(self.mapping_max_range > 0.0 && self.discovery_speed > 0.0 && self.staging_offset >= 0.0) {
            return bad("mapping range, discovery speed and staging offset must be positive".into());
        }
        if self.max_ticks == 0 || self.refine_every == 0 {
            return bad("max_ticks and refine_every must be positive".into());
        }
        Ok(())
    }

    fn planner(&self) -> PlannerParams {
        PlannerParams {
            vehicle: self.vehicle,
            discovery_speed: self.discovery_speed,
            ..PlannerParams::default()
        }
    }

    fn fault_at(&self, stage: Stage, tick: u64) -> Option<FaultKind> {
        self.faults.iter().find_map(|f| {
            let hit = match f.kind {
                FaultKind::Error => f.tick == tick,
                FaultKind::Silent => tick >= f.tick,
            };
            (f.stage == stage && hit).then_some(f.kind)
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SupervisorError {
    #[error("{0} needs a reference map")]
    MissingReferenceMap(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Ground truth plus the random streams of every sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub truth: TrueVehicleState,
    pub track: Arc<TrackDefinition>,
    pub gnss: GnssReceiver,
    pub rtk: GnssReceiver,
    rng_gnss: ChaCha8Rng,
    rng_rtk: ChaCha8Rng,
    rng_imu: ChaCha8Rng,
    rng_wheel: ChaCha8Rng,
    rng_camera: ChaCha8Rng,
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

/// A message and the tick that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Stamped<T> {
    pub tick: u64,
    pub msg: T,
}

impl<T> Stamped<T> {
    fn new(tick: u64, msg: T) -> Self {
        Self { tick, msg }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorBundle {
    /// Ground truth at sampling time, for logging only.
    pub truth: TrueVehicleState,
    pub gnss: GnssFix,
    pub rtk: GnssFix,
    pub imu: ImuSample,
    pub wheel: WheelSpeed,
    pub detections: Vec<Detection>,
}

/// World-frame EKF output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub pose: Pose2D,
    pub speed: f64,
}

/// Known-map alignment from the map frame to the reference frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentState {
    pub t: Transform2x2,
    pub inverse: Transform2x2,
    pub mean_residual: f64,
    pub refined_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState {
    pub tick: u64,
    pub status: AsStatus,
    pub health: NodeHealth,
    pub tracker: TrackerState,
    pub ekf: Ekf,
    pub map: Arc<GlobalMap>,
    pub awareness: AwarenessState,
    pub awareness_params: AwarenessParams,
    pub alignment: Option<AlignmentState>,
    /// Reference cones and mission path relative to the staging point.
    pub reference: Option<Arc<ReferenceMap>>,
    pub plan: Stamped<Arc<PathPlan>>,
    /// Lap count the cached global plan was built for.
    global_lap: Option<u32>,
    /// Waypoint progress along a known-map path.
    progress: usize,
    pub last_sensors: Stamped<SensorBundle>,
    pub last_observations: Stamped<Vec<ConeObservation>>,
    pub last_estimate: Stamped<Estimate>,
    pub last_command: Stamped<ControlCommand>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMap {
    pub cones: Vec<(ConeColor, Point)>,
    pub start_pair: (Point, Point),
    pub finish_line: Option<(Point, Point)>,
    pub skidpad_center: Point,
    pub path: Vec<Point>,
}

impl ReferenceMap {
    pub fn new(track: &TrackDefinition, kind: MissionKind, staging_offset: f64) -> Self {
        let staging = track.staging_pose(staging_offset).position();
        let rel = |p: Point| Point::from(p - staging);
        let path = match kind {
            MissionKind::Acceleration => acceleration_path(track, staging_offset),
            MissionKind::Skidpad => skidpad_path(track, staging_offset, 0.5),
            MissionKind::Trackdrive => Vec::new(),
        };
        let (l, r) = track.start_line;
        Self {
            cones: track.cones.iter().map(|c| (c.color, rel(c.position))).collect(),
            start_pair: (rel(track.cone(l).position), rel(track.cone(r).position)),
            finish_line: track
                .finish_line()
                .map(|(a, b)| (rel(track.cone(a).position), rel(track.cone(b).position))),
            skidpad_center: rel(track.start_midpoint()),
            path: path.into_iter().map(rel).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSnapshot {
    pub tick: u64,
    /// Status in force during the tick; it gates plan and control.
    pub status: AsStatus,
    /// Status after this tick's update.
    pub next_status: AsStatus,
    pub sensors: Stamped<SensorBundle>,
    pub observations: Stamped<Vec<ConeObservation>>,
    pub estimate: Stamped<Estimate>,
    pub map: Stamped<Arc<GlobalMap>>,
    pub plan: Stamped<Arc<PathPlan>>,
    pub command: Stamped<ControlCommand>,
    pub awareness: Stamped<AwarenessState>,
    pub alignment: Option<AlignmentState>,
    pub health: NodeHealth,
}

fn sample_sensors(world: &mut World, cfg: &PipelineConfig) -> SensorBundle {
    let period = cfg.sensors.sample_period();
    let truth = world.truth;
    SensorBundle {
        truth,
        gnss: world.gnss.sample(&truth, period, &mut world.rng_gnss),
        rtk: world.rtk.sample(&truth, period, &mut world.rng_rtk),
        imu: sample_imu(&truth, &cfg.sensors, &cfg.vehicle, &mut world.rng_imu),
        wheel: sample_wheel_speed(&truth, &cfg.sensors, &mut world.rng_wheel),
        detections: render_cones(&truth, &world.track, &cfg.camera, &cfg.sensors, &mut world.rng_camera),
    }
}

fn position_fix(s: &SensorBundle, source: PositionSource) -> GnssFix {
    match source {
        PositionSource::Rtk => s.rtk,
        PositionSource::Gnss => s.gnss,
    }
}

/// Seeds the sensor streams, takes the first fix, and sets the EKF state and
/// the map origin from it. Known-map missions need `reference`.
pub fn init_run(
    config: &PipelineConfig,
    track: &TrackDefinition,
    reference: Option<&TrackDefinition>,
) -> Result<(World, PipelineState), SupervisorError> {
    config.validate()?;
    let reference = match (config.mission.requires_reference_map(), reference) {
        (true, None) => return Err(SupervisorError::MissingReferenceMap(config.mission.name())),
        (true, Some(r)) => Some(Arc::new(ReferenceMap::new(r, config.mission, config.staging_offset))),
        (false, _) => None,
    };
    let seed = config.seed;
    let mut world = World {
        truth: TrueVehicleState::at_rest(track.staging_pose(config.staging_offset)),
        track: Arc::new(track.clone()),
        gnss: GnssReceiver::gnss(&config.sensors),
        rtk: GnssReceiver::rtk(&config.sensors),
        rng_gnss: stream(seed, 1),
        rng_rtk: stream(seed, 2),
        rng_imu: stream(seed, 3),
        rng_wheel: stream(seed, 4),
        rng_camera: stream(seed, 5),
    };
    let first = sample_sensors(&mut world, config);
    let fix = position_fix(&first, config.position_source);
    let pose = Pose2D::new(fix.x, fix.y, first.imu.heading);
    let mut ekf = Ekf::new(EkfState::from_pose(&pose, first.wheel.v), config.noise, config.vehicle.wheelbase);
    ekf.jacobian = config.jacobian;
    let mut map = GlobalMap::new(config.gate);
    map.set_origin(pose).expect("fresh map");

    let mut awareness_params = AwarenessParams::new(config.mission, config.laps);
    if config.mission == MissionKind::Skidpad {
        awareness_params.skidpad_center = None;
    }
    let mut state = PipelineState {
        tick: 0,
        status: AsStatus::Off,
        health: NodeHealth::default(),
        tracker: TrackerState::default(),
        ekf,
        map: Arc::new(map),
        awareness: AwarenessState::default(),
        awareness_params,
        alignment: None,
        reference,
        plan: Stamped::new(0, Arc::new(PathPlan::empty(PlanMode::Discovery))),
        global_lap: None,
        progress: 0,
        last_sensors: Stamped::new(0, first),
        last_observations: Stamped::new(0, Vec::new()),
        last_estimate: Stamped::new(0, Estimate { pose, speed: ekf.state.nu }),
        last_command: Stamped::new(0, ControlCommand::default()),
    };
    let flags = MissionFlags {
        configured: true,
        ..Default::default()
    };
    state.status = update_status(state.status, &flags, &state.awareness, &state.health);
    Ok((world, state))
}

fn perceive(
    tracker: &TrackerState,
    detections: &[Detection],
    cfg: &PipelineConfig,
) -> (TrackerState, Vec<ConeObservation>) {
    let boxes: Vec<BoxDetection> = detections
        .iter()
        .map(|d| BoxDetection {
            bbox: d.bbox,
            depth: d.depth,
            color: d.color,
        })
        .collect();
    let (next, _) = tracker_step(tracker, &boxes, &cfg.tracker);
    let obs = cones_birdseye(&next.tracks, &cfg.camera.intrinsics, &cfg.camera.mount);
    (next, obs)
}

fn localize(
    ekf: &Ekf,
    last: &ControlCommand,
    s: &SensorBundle,
    cfg: &PipelineConfig,
) -> Result<(Ekf, Estimate), crate::ekf::EkfError> {
    let t_s = cfg.sensors.sample_period();
    let v = &cfg.vehicle;
    let mut accel = last.accel;
    if last.brake > 0.0 {
        accel = accel.min(-last.brake.min(1.0) * v.a_long_max);
    }
    let mut accel = accel.clamp(-v.a_long_max, v.a_long_max);
    // the vehicle does not roll backwards under braking
    if ekf.state.nu + accel * t_s < 0.0 {
        accel = -ekf.state.nu.max(0.0) / t_s;
    }
    let u = ControlInput {
        accel,
        alpha: last.steering.clamp(-v.max_steer, v.max_steer),
        t_s,
    };
    let fix = position_fix(s, cfg.position_source);
    let z = Measurement::full(fix.x, fix.y, s.imu.heading, s.wheel.v, s.imu.yaw_rate);
    let mut next = *ekf;
    let (pose, speed) = next.fuse_step(&u, &z, fix.valid)?;
    Ok((next, Estimate { pose, speed }))
}

struct MapOutput {
    map: Arc<GlobalMap>,
    awareness: AwarenessState,
    awareness_params: AwarenessParams,
    alignment: Option<AlignmentState>,
}

fn align(
    map: &GlobalMap,
    reference: &ReferenceMap,
    previous: Option<AlignmentState>,
    tick: u64,
    cfg: &PipelineConfig,
) -> Result<Option<AlignmentState>, AlignmentError> {
    let Some((l, r)) = map.start_pair else {
        return Ok(previous);
    };
    if previous.is_some_and(|a| tick < a.refined_at + cfg.refine_every) {
        return Ok(previous);
    }
    let t0 = match previous {
        Some(a) => a.t,
        None => estimate_transform(
            [map.cones[l].position, map.cones[r].position],
            [reference.start_pair.0, reference.start_pair.1],
        )?,
    };
    let observed: Vec<(ConeColor, Point)> = map.confirmed(cfg.min_obs).map(|c| (c.color, c.position)).collect();
    let seed = cfg.seed ^ tick.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let res = refine(&t0, &observed, &reference.cones, seed, &cfg.refine)?;
    let inverse = res.t.inverse().ok_or(AlignmentError::Degenerate(res.t.det()))?;
    Ok(Some(AlignmentState {
        t: res.t,
        inverse,
        mean_residual: res.mean_residual(),
        refined_at: tick,
    }))
}

fn map_stage(state: &PipelineState, obs: &[ConeObservation], est: &Estimate, cfg: &PipelineConfig) -> Result<MapOutput, AlignmentError> {
    let mut map = (*state.map).clone();
    let pose = map.pose_to_map(&est.pose);
    map.integrate(&pose, obs, cfg.mapping_max_range);
    map.identify_start_pair(cfg.min_obs);
    // a closed ordering is final; later outliers must not reshuffle it
    if !(map.left_closed && map.right_closed) {
        order_cones(&mut map, &OrderingParams::for_mission(cfg.mission));
    }

    let mut params = state.awareness_params;
    let mut alignment = state.alignment;
    if let Some(reference) = &state.reference {
        alignment = align(&map, reference, alignment, state.tick, cfg)?;
        if let Some(a) = alignment {
            let back = |p: &Point| apply(&a.inverse, p);
            params.finish_line = reference.finish_line.map(|(p, q)| (back(&p), back(&q)));
            params.skidpad_center = Some((back(&reference.skidpad_center), cfg.skidpad_center_radius));
        }
    }
    let awareness = awareness_update(&state.awareness, &pose, &map, &params);
    Ok(MapOutput {
        map: Arc::new(map),
        awareness,
        awareness_params: params,
        alignment,
    })
}

/// New plan, or `None` to keep the current one.
fn plan_stage(state: &PipelineState, pose: &Pose2D, cfg: &PipelineConfig) -> Option<(PathPlan, Option<u32>)> {
    let planner = cfg.planner();
    match &state.reference {
        None => {
            let lap = state.awareness.lap_count;
            if lap >= 2 {
                if state.global_lap == Some(lap) && state.plan.msg.mode == PlanMode::Global {
                    return None;
                }
                if let Some(p) = global_plan(&state.map, &planner) {
                    return Some((p, Some(lap)));
                }
            }
            Some((plan_tick(&state.map, pose, PlanMode::Discovery, &planner), None))
        }
        Some(reference) => {
            let a = state.alignment?;
            if !state.plan.msg.is_empty() && a.refined_at < state.plan.tick {
                return None;
            }
            let pts: Vec<Point> = reference.path.iter().map(|p| apply(&a.inverse, p)).collect();
            Some((build_plan(&pts, &cfg.vehicle, PlanMode::Global, false, true), None))
        }
    }
}

fn standstill(truth: &TrueVehicleState) -> bool {
    truth.speed < 1e-3
}

/// One pipeline tick. Pure: the inputs are not modified.
pub fn tick(world: &World, state: &PipelineState, cfg: &PipelineConfig) -> (World, PipelineState, PipelineSnapshot) {
    tick_with(world, state, cfg, Executor::Sequential)
}

pub fn tick_with(
    world: &World,
    state: &PipelineState,
    cfg: &PipelineConfig,
    executor: Executor,
) -> (World, PipelineState, PipelineSnapshot) {
    let k = state.tick;
    let mut w = world.clone();
    let mut s = state.clone();
    let driving = s.status == AsStatus::Driving;
    let fault = |stage| cfg.fault_at(stage, k);

    // sense
    match fault(Stage::Sense) {
        None => {
            s.last_sensors = Stamped::new(k, sample_sensors(&mut w, cfg));
            s.health.touch(Stage::Sense, k);
        }
        Some(FaultKind::Error) => s.health.fault(Stage::Sense),
        Some(FaultKind::Silent) => {}
    }
    let sensors = s.last_sensors.clone();

    // perceive and localize only depend on the sensor bundle
    let do_perceive = || match fault(Stage::Perceive) {
        None => Some(Ok(perceive(&s.tracker, &sensors.msg.detections, cfg))),
        Some(FaultKind::Error) => Some(Err(())),
        Some(FaultKind::Silent) => None,
    };
    let do_localize = || match fault(Stage::Localize) {
        None => Some(localize(&s.ekf, &s.last_command.msg, &sensors.msg, cfg).map_err(|_| ())),
        Some(FaultKind::Error) => Some(Err(())),
        Some(FaultKind::Silent) => None,
    };
    let (perceived, localized) = match executor {
        Executor::Sequential => (do_perceive(), do_localize()),
        Executor::Parallel => rayon::join(do_perceive, do_localize),
    };
    match perceived {
        Some(Ok((tracker, obs))) => {
            s.tracker = tracker;
            s.last_observations = Stamped::new(k, obs);
            s.health.touch(Stage::Perceive, k);
        }
        Some(Err(())) => s.health.fault(Stage::Perceive),
        None => {}
    }
    match localized {
        Some(Ok((ekf, est))) => {
            s.ekf = ekf;
            s.last_estimate = Stamped::new(k, est);
            s.health.touch(Stage::Localize, k);
        }
        Some(Err(())) => s.health.fault(Stage::Localize),
        None => {}
    }

    // map / align
    let mut map_tick = k;
    let obs = if s.last_observations.tick == k { s.last_observations.msg.clone() } else { Vec::new() };
    match fault(Stage::Map) {
        None => match map_stage(&s, &obs, &s.last_estimate.msg, cfg) {
            Ok(out) => {
                s.map = out.map;
                s.awareness = out.awareness;
                s.awareness_params = out.awareness_params;
                s.alignment = out.alignment;
                s.health.touch(Stage::Map, k);
            }
            Err(_) => s.health.fault(Stage::Map),
        },
        Some(FaultKind::Error) => s.health.fault(Stage::Map),
        Some(FaultKind::Silent) => map_tick = map_tick.saturating_sub(1),
    }
    let pose_map = s.map.pose_to_map(&s.last_estimate.msg.pose);

    // plan
    if driving {
        match fault(Stage::Plan) {
            None => {
                if let Some((plan, lap)) = plan_stage(&s, &pose_map, cfg) {
                    if lap.is_some() || plan.mode == PlanMode::Discovery {
                        s.global_lap = lap;
                    }
                    s.plan = Stamped::new(k, Arc::new(plan));
                }
                s.health.touch(Stage::Plan, k);
            }
            Some(FaultKind::Error) => s.health.fault(Stage::Plan),
            Some(FaultKind::Silent) => {}
        }
    } else {
        s.health.touch(Stage::Plan, k);
    }

    // control
    let command = match s.status {
        AsStatus::EmergencyBrake => ControlCommand::full_brake(&cfg.vehicle),
        AsStatus::Driving => match fault(Stage::Control) {
            None => {
                s.health.touch(Stage::Control, k);
                let cmd = if s.reference.is_some() {
                    let plan = &s.plan.msg;
                    match nearest_waypoint_after(plan, &pose_map.position(), s.progress.saturating_sub(2), 20) {
                        Some(near) => {
                            s.progress = near;
                            control_tick_from(&pose_map, s.last_estimate.msg.speed, plan, near, &cfg.pure_pursuit, &cfg.vehicle)
                        }
                        None => ControlCommand::full_brake(&cfg.vehicle),
                    }
                } else {
                    control_tick(&pose_map, s.last_estimate.msg.speed, &s.plan.msg, &cfg.pure_pursuit, &cfg.vehicle)
                };
                if s.awareness.finish_reached {
                    // keep following the path while stopping
                    ControlCommand {
                        steering: cmd.steering,
                        ..ControlCommand::full_brake(&cfg.vehicle)
                    }
                } else {
                    cmd
                }
            }
            Some(FaultKind::Error) => {
                s.health.fault(Stage::Control);
                ControlCommand::full_brake(&cfg.vehicle)
            }
            Some(FaultKind::Silent) => s.last_command.msg,
        },
        _ => ControlCommand::default(),
    };
    if s.status != AsStatus::Driving {
        s.health.touch(Stage::Control, k);
    }
    s.last_command = Stamped::new(k, command);

    // actuate
    let dt = cfg.sensors.sample_period();
    match fault(Stage::Actuate) {
        Some(FaultKind::Error) => {
            s.health.fault(Stage::Actuate);
            w.truth = step_dynamics(&w.truth, &command, dt, &cfg.vehicle);
        }
        Some(FaultKind::Silent) => w.truth = step_dynamics(&w.truth, &ControlCommand::default(), dt, &cfg.vehicle),
        None => {
            w.truth = step_dynamics(&w.truth, &command, dt, &cfg.vehicle);
            s.health.touch(Stage::Actuate, k);
        }
    }

    s.health.refresh(k, cfg.stale_ticks);
    let status = s.status;
    let flags = MissionFlags {
        configured: true,
        go: true,
        standstill: standstill(&w.truth),
        tick_cap: k + 1 >= cfg.max_ticks,
    };
    s.status = update_status(status, &flags, &s.awareness, &s.health);
    s.tick = k + 1;

    let snapshot = PipelineSnapshot {
        tick: k,
        status,
        next_status: s.status,
        sensors,
        observations: s.last_observations.clone(),
        estimate: s.last_estimate.clone(),
        map: Stamped::new(map_tick, s.map.clone()),
        plan: s.plan.clone(),
        command: s.last_command.clone(),
        awareness: Stamped::new(map_tick, s.awareness),
        alignment: s.alignment,
        health: s.health.clone(),
    };
    (w, s, snapshot)
}

/// Whether the loop should stop after a tick that ended in `state`.
pub fn run_complete(world: &World, state: &PipelineState, cfg: &PipelineConfig) -> bool {
    match state.status {
        AsStatus::Finished => true,
        AsStatus::EmergencyBrake => standstill(&world.truth),
        // never got going: give up at the cap
        AsStatus::Off | AsStatus::Ready => state.tick >= cfg.max_ticks,
        AsStatus::Driving => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: AsStatus,
    pub ticks: u64,
    pub world: World,
    pub state: PipelineState,
}

/// Runs until Finished, until stopped after an emergency brake, or until the
/// tick cap. Every snapshot goes to `sink`.
pub fn run(
    config: &PipelineConfig,
    track: &TrackDefinition,
    reference: Option<&TrackDefinition>,
    executor: Executor,
    mut sink: impl FnMut(&PipelineSnapshot),
) -> Result<RunOutcome, SupervisorError> {
    let (mut world, mut state) = init_run(config, track, reference)?;
    // braking allowance after the cap forces an emergency stop
    let hard_cap = config.max_ticks + 600;
    while state.tick < hard_cap {
        let (w, s, snap) = tick_with(&world, &state, config, executor);
        world = w;
        state = s;
        sink(&snap);
        if run_complete(&world, &state, config) {
            break;
        }
    }
    Ok(RunOutcome {
        status: state.status,
        ticks: state.tick,
        world,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trackgen::{generate_track, TrackGenParams};

    fn track(kind: MissionKind) -> TrackDefinition {
        generate_track(3, kind, &TrackGenParams::for_kind(kind)).unwrap()
    }

    #[test]
    fn transition_graph_is_exact() {
        use AsStatus::*;
        let allowed = [
            (Off, StatusEvent::Configure, Ready),
            (Ready, StatusEvent::Go, Driving),
            (Driving, StatusEvent::Finish, Finished),
            (Driving, StatusEvent::Fault, EmergencyBrake),
        ];
        for s in AsStatus::ALL {
            for e in StatusEvent::ALL {
                let next = transition(s, e);
                match allowed.iter().find(|(a, b, _)| *a == s && *b == e) {
                    Some((_, _, to)) => assert_eq!(next, *to),
                    None => assert_eq!(next, s, "{s:?} {e:?}"),
                }
            }
        }
        for s in [Finished, EmergencyBrake] {
            assert!(s.is_terminal());
        }
    }

    #[test]
    fn status_rules() {
        let healthy = NodeHealth::default();
        let mut aw = AwarenessState::default();
        let flags = MissionFlags { configured: true, go: true, ..Default::default() };
        assert_eq!(update_status(AsStatus::Driving, &flags, &aw, &healthy), AsStatus::Driving);
        let mut faulted = NodeHealth::default();
        faulted.fault(Stage::Localize);
        assert_eq!(update_status(AsStatus::Driving, &flags, &aw, &faulted), AsStatus::EmergencyBrake);
        aw.finish_reached = true;
        assert_eq!(update_status(AsStatus::Driving, &flags, &aw, &healthy), AsStatus::Driving);
        let stopped = MissionFlags { standstill: true, ..flags };
        assert_eq!(update_status(AsStatus::Driving, &stopped, &aw, &healthy), AsStatus::Finished);
        let mut stale = NodeHealth::default();
        stale.refresh(10, 3);
        assert_eq!(stale.get(Stage::Plan), StageStatus::Stale);
        assert_eq!(update_status(AsStatus::Driving, &flags, &aw, &stale), AsStatus::EmergencyBrake);
        assert_eq!(update_status(AsStatus::Off, &flags, &aw, &healthy), AsStatus::Ready);
    }

    #[test]
    fn ready_tick_sends_zero_command() {
        let cfg = PipelineConfig::new(MissionKind::Trackdrive, 1, 1);
        let (w, s) = init_run(&cfg, &track(MissionKind::Trackdrive), None).unwrap();
        assert_eq!(s.status, AsStatus::Ready);
        assert!(s.alignment.is_none() && s.reference.is_none());
        let (_, s1, snap) = tick(&w, &s, &cfg);
        assert_eq!(snap.status, AsStatus::Ready);
        assert_eq!(snap.command.msg, ControlCommand::default());
        assert!(snap.plan.msg.is_empty());
        assert_eq!(s1.status, AsStatus::Driving);
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = PipelineConfig::new(MissionKind::Trackdrive, 1, 9);
        let t = track(MissionKind::Trackdrive);
        assert_eq!(init_run(&cfg, &t, None).unwrap(), init_run(&cfg, &t, None).unwrap());
    }

    #[test]
    fn known_map_missions_need_reference() {
        for kind in [MissionKind::Skidpad, MissionKind::Acceleration] {
            let cfg = PipelineConfig::new(kind, 1, 0);
            assert!(matches!(init_run(&cfg, &track(kind), None), Err(SupervisorError::MissingReferenceMap(_))));
        }
    }

    #[test]
    fn localization_fault_brakes_next_tick() {
        let mut cfg = PipelineConfig::new(MissionKind::Trackdrive, 1, 2);
        cfg.faults.push(FaultSpec { stage: Stage::Localize, tick: 40, kind: FaultKind::Error });
        let mut snaps = Vec::new();
        let out = run(&cfg, &track(MissionKind::Trackdrive), None, Executor::Sequential, |s| snaps.push(s.clone())).unwrap();
        assert_eq!(out.status, AsStatus::EmergencyBrake);
        assert!(snaps[40].sensors.msg.truth.speed > 1.0);
        assert_eq!(snaps[39].next_status, AsStatus::Driving);
        assert_eq!(snaps[40].next_status, AsStatus::EmergencyBrake);
        assert_eq!(snaps[41].status, AsStatus::EmergencyBrake);
        for s in &snaps[41..] {
            assert_eq!(s.command.msg, ControlCommand::full_brake(&cfg.vehicle));
        }
    }

    #[test]
    fn silent_stage_goes_stale() {
        let mut cfg = PipelineConfig::new(MissionKind::Trackdrive, 1, 2);
        cfg.faults.push(FaultSpec { stage: Stage::Plan, tick: 15, kind: FaultKind::Silent });
        let mut snaps = Vec::new();
        run(&cfg, &track(MissionKind::Trackdrive), None, Executor::Sequential, |s| snaps.push(s.clone())).unwrap();
        // last output at tick 14; four missed ticks exceed the limit of three
        assert_eq!(snaps[17].health.get(Stage::Plan), StageStatus::Ok);
        assert_eq!(snaps[18].health.get(Stage::Plan), StageStatus::Stale);
        assert_eq!(snaps[18].next_status, AsStatus::EmergencyBrake);
    }

    #[test]
    fn parallel_matches_sequential() {
        let cfg = PipelineConfig::new(MissionKind::Trackdrive, 1, 4);
        let t = track(MissionKind::Trackdrive);
        let (mut w, mut s) = init_run(&cfg, &t, None).unwrap();
        let (mut wp, mut sp) = (w.clone(), s.clone());
        for _ in 0..80 {
            let (w1, s1, a) = tick_with(&w, &s, &cfg, Executor::Sequential);
            let (w2, s2, b) = tick_with(&wp, &sp, &cfg, Executor::Parallel);
            assert_eq!(a, b);
            (w, s, wp, sp) = (w1, s1, w2, s2);
        }
    }

    #[test]
    fn commands_only_while_driving() {
        let cfg = PipelineConfig::new(MissionKind::Acceleration, 1, 5);
        let t = track(MissionKind::Acceleration);
        let mut seen_eb = false;
        let out = run(&cfg, &t, Some(&t), Executor::Sequential, |s| {
            let c = s.command.msg;
            if s.status != AsStatus::Driving {
                assert!(c.accel <= 0.0 && c.steering == 0.0);
            }
            if seen_eb {
                assert_eq!(c.brake, 1.0);
            }
            seen_eb |= s.status == AsStatus::EmergencyBrake;
        })
        .unwrap();
        assert_eq!(out.status, AsStatus::Finished);
    }
}
