use approx::assert_abs_diff_eq;
use racestack_core::mapping::ordering::order_side;
use racestack_core::mapping::{
    awareness_update, order_cones, AwarenessParams, AwarenessState, GlobalMap, LapType, MapError, OrderingParams,
};
use racestack_core::planning::reference::truth_midline;
use racestack_core::trackgen::{generate_track, TrackGenParams};
use racestack_core::{ConeColor, MissionKind, Point, Pose2D, Vector};

#[test]
fn origin_is_a_translation() {
    let mut m = GlobalMap::default();
    m.set_origin(Pose2D::new(10.0, 5.0, 0.0)).unwrap();
    assert_eq!(m.to_map(&Point::new(12.0, 5.0)), Point::new(2.0, 0.0));
    assert_eq!(m.to_world(&Point::new(2.0, 0.0)), Point::new(12.0, 5.0));
    assert!(matches!(m.set_origin(Pose2D::new(0.0, 0.0, 0.0)), Err(MapError::OriginAlreadySet)));

    let mut z = GlobalMap::default();
    z.set_origin(Pose2D::new(0.0, 0.0, 0.0)).unwrap();
    assert_eq!(z.to_map(&Point::new(3.5, -1.0)), Point::new(3.5, -1.0));
}

#[test]
fn association_weighted_mean() {
    let mut m = GlobalMap::default();
    let p = Point::new(0.0, 4.0);
    let id = m.associate(p, ConeColor::Blue, Point::origin(), 4.0);
    assert_eq!(m.cones[id].weight_sum, 0.25);
    assert_eq!(m.associate(p, ConeColor::Blue, Point::origin(), 4.0), id);
    assert_eq!(m.cones[id].position, p);
    assert_eq!(m.cones[id].n_obs, 2);

    let mut m = GlobalMap::default();
    let p1 = Point::new(0.0, 4.0);
    let p2 = Point::new(0.1, 4.2);
    m.associate(p1, ConeColor::Yellow, Point::origin(), 4.0);
    m.associate(p2, ConeColor::Yellow, Point::new(0.0, 2.2), 2.0);
    let want = (p1.coords * 0.25 + p2.coords * 0.5) / 0.75;
    assert_abs_diff_eq!(m.cones[0].position.coords, want, epsilon = 1e-12);
    assert_eq!(m.cones.len(), 1);
}

#[test]
fn straight_row_orders_geometrically() {
    let pts: Vec<(usize, Point)> = [3, 0, 4, 1, 2].iter().map(|&k| (k, Point::new(1.5, 5.0 * (k + 1) as f64))).collect();
    let (order, closed) = order_side(&pts, Point::new(1.5, 0.0), Vector::new(0.0, 1.0), &OrderingParams::default());
    assert_eq!(order, vec![0, 1, 2, 3, 4]);
    assert!(!closed);
}

#[test]
fn closest_candidate_in_triangle_wins() {
    let pts = vec![(0, Point::new(0.5, 6.0)), (1, Point::new(-0.5, 4.0))];
    let (order, _) = order_side(&pts, Point::origin(), Vector::new(0.0, 1.0), &OrderingParams::default());
    assert_eq!(order[0], 1);
}

/// Map built from the true cones, origin at the staging pose.
fn true_map(seed: u64) -> (racestack_core::TrackDefinition, GlobalMap) {
    let t = generate_track(seed, MissionKind::Trackdrive, &TrackGenParams::default()).unwrap();
    let staging = t.staging_pose(6.0);
    let mut m = GlobalMap::default();
    m.set_origin(staging).unwrap();
    for _ in 0..2 {
        for c in &t.cones {
            let p = m.to_map(&c.position);
            m.associate(p, c.color, p + Vector::new(0.0, -3.0), 3.0);
        }
    }
    m.identify_start_pair(2);
    order_cones(&mut m, &OrderingParams::for_mission(MissionKind::Trackdrive));
    (t, m)
}

#[test]
fn generated_tracks_order_like_the_generator() {
    for seed in 0..50 {
        let (t, m) = true_map(seed);
        assert_eq!(m.cones.len(), t.cones.len());
        assert_eq!(m.start_pair, Some(t.start_line), "seed {seed}");
        let ids = |c: ConeColor| t.side(c).iter().map(|c| c.id).collect::<Vec<_>>();
        assert_eq!(m.ordered_left, ids(ConeColor::Blue), "seed {seed}");
        assert_eq!(m.ordered_right, ids(ConeColor::Yellow), "seed {seed}");
        assert!(m.left_closed && m.right_closed);
    }
}

#[test]
fn driving_the_midline_counts_laps() {
    let (t, m) = true_map(4);
    let (mid, closed) = truth_midline(&t, MissionKind::Trackdrive, 6.0);
    assert!(closed);
    let params = AwarenessParams::new(MissionKind::Trackdrive, 1);
    let mut s = AwarenessState::default();
    // start just behind the line, go around twice
    let start = mid
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t.start_midpoint()).norm().total_cmp(&(b.1 - t.start_midpoint()).norm()))
        .unwrap()
        .0;
    let n = mid.len();
    let mut prev_lap = 0;
    for k in 0..=2 * n {
        let a = mid[(start + n - 2 + k) % n];
        let b = mid[(start + n - 1 + k) % n];
        let d = b - a;
        let pose = m.pose_to_map(&Pose2D::new(b.x, b.y, (-d.x).atan2(d.y)));
        s = awareness_update(&s, &pose, &m, &params);
        assert!(!s.off_track, "step {k}");
        assert!(s.lap_count >= prev_lap);
        prev_lap = s.lap_count;
    }
    assert_eq!(s.lap_count, 2);
    assert_eq!(s.lap_type, LapType::Timed);
    assert!(s.finish_reached);

    // 2.1 m off the centerline of a 3 m wide track
    let c = t.start_midpoint();
    let dir = racestack_core::model::heading_vector(t.start_heading());
    let side = c + racestack_core::model::left_of(&dir) * 2.1 + dir * 8.0;
    let s = awareness_update(&AwarenessState::default(), &m.pose_to_map(&Pose2D::new(side.x, side.y, t.start_heading())), &m, &params);
    assert!(s.off_track);
}
