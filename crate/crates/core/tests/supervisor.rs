use racestack_core::control::ControlCommand;
use racestack_core::geometry::segments_intersect;
use racestack_core::mapping::AwarenessState;
use racestack_core::supervisor::{
    init_run, run, tick, update_status, AsStatus, Executor, FaultKind, FaultSpec, MissionFlags, NodeHealth,
    PipelineConfig, PipelineSnapshot, Stage, SupervisorError,
};
use racestack_core::trackgen::{generate_track, TrackGenParams};
use racestack_core::{MissionKind, TrackDefinition};

fn track(kind: MissionKind, seed: u64) -> TrackDefinition {
    generate_track(seed, kind, &TrackGenParams::for_kind(kind)).unwrap()
}

fn collect(cfg: &PipelineConfig, t: &TrackDefinition, executor: Executor) -> (AsStatus, Vec<PipelineSnapshot>) {
    let mut snaps = Vec::new();
    let out = run(cfg, t, Some(t), executor, |s| snaps.push(s.clone())).unwrap();
    (out.status, snaps)
}

#[test]
fn ready_ticks_do_not_command() {
    let t = track(MissionKind::Trackdrive, 2);
    let (status, snaps) = collect(&PipelineConfig::new(MissionKind::Trackdrive, 1, 2), &t, Executor::Sequential);
    assert_eq!(status, AsStatus::Finished);
    let ready: Vec<_> = snaps.iter().filter(|s| s.status == AsStatus::Ready).collect();
    assert!(!ready.is_empty());
    for s in ready {
        assert_eq!(s.command.msg, ControlCommand::default());
        assert!(s.plan.msg.is_empty());
    }
}

#[test]
fn same_seed_same_snapshots() {
    let t = track(MissionKind::Acceleration, 5);
    let cfg = PipelineConfig::new(MissionKind::Acceleration, 1, 5);
    let (_, a) = collect(&cfg, &t, Executor::Sequential);
    let (_, b) = collect(&cfg, &t, Executor::Sequential);
    let (_, c) = collect(&cfg, &t, Executor::Parallel);
    assert!(a == b);
    assert!(a == c);
}

#[test]
fn tick_count_matches_lap_times() {
    let t = track(MissionKind::Trackdrive, 6);
    let (status, snaps) = collect(&PipelineConfig::new(MissionKind::Trackdrive, 10, 6), &t, Executor::Sequential);
    assert_eq!(status, AsStatus::Finished);
    let (a, b) = (t.cone(t.start_line.0).position, t.cone(t.start_line.1).position);
    let crossings: Vec<u64> = snaps
        .windows(2)
        .filter(|w| {
            let (p, q) = (w[0].sensors.msg.truth.pose.position(), w[1].sensors.msg.truth.pose.position());
            segments_intersect(p, q, a, b)
        })
        .map(|w| w[1].tick)
        .collect();
    assert_eq!(crossings.len(), 11);
    let lap_ticks: Vec<u64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let total: u64 = lap_ticks.iter().sum();
    let mean_lap_s = total as f64 / 10.0 / 10.0;
    let driven = crossings[10] - crossings[0];
    assert!((driven as f64 - 10.0 * mean_lap_s * 10.0).abs() <= 1.0);
}

#[test]
fn status_rules() {
    let healthy = NodeHealth::default();
    let flags = MissionFlags {
        configured: true,
        go: true,
        ..MissionFlags::default()
    };
    let aw = AwarenessState::default();
    assert_eq!(update_status(AsStatus::Driving, &flags, &aw, &healthy), AsStatus::Driving);
    let mut done = aw;
    done.finish_reached = true;
    let stopped = MissionFlags {
        standstill: true,
        ..flags
    };
    assert_eq!(update_status(AsStatus::Driving, &stopped, &done, &healthy), AsStatus::Finished);
}

#[test]
fn localization_fault_brakes_next_tick() {
    let t = track(MissionKind::Trackdrive, 1);
    let mut cfg = PipelineConfig::new(MissionKind::Trackdrive, 1, 1);
    cfg.faults.push(FaultSpec {
        stage: Stage::Localize,
        tick: 100,
        kind: FaultKind::Error,
    });
    let (status, snaps) = collect(&cfg, &t, Executor::Sequential);
    assert_eq!(status, AsStatus::EmergencyBrake);
    let at = snaps.iter().find(|s| s.tick == 100).unwrap();
    assert_eq!(at.status, AsStatus::Driving);
    assert_eq!(at.next_status, AsStatus::EmergencyBrake);
    let next = snaps.iter().find(|s| s.tick == 101).unwrap();
    assert_eq!(next.status, AsStatus::EmergencyBrake);
    assert!(next.command.msg.brake > 0.0);
}

#[test]
fn init_rules() {
    let t = track(MissionKind::Trackdrive, 3);
    let cfg = PipelineConfig::new(MissionKind::Trackdrive, 1, 3);
    let (w1, s1) = init_run(&cfg, &t, None).unwrap();
    assert!(s1.alignment.is_none() && s1.reference.is_none());
    let (w2, s2) = init_run(&cfg, &t, None).unwrap();
    assert!(w1 == w2 && s1 == s2);
    let (_, _, snap) = tick(&w1, &s1, &cfg);
    assert!(snap.alignment.is_none());

    let sk = track(MissionKind::Skidpad, 3);
    let cfg = PipelineConfig::new(MissionKind::Skidpad, 1, 3);
    assert!(matches!(init_run(&cfg, &sk, None), Err(SupervisorError::MissingReferenceMap(_))));
}
