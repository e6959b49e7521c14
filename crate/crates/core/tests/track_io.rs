use racestack_core::geometry::segments_intersect;
use racestack_core::track_io::{format_track, load_track, parse_track, save_track};
use racestack_core::trackgen::{generate_track, TrackGenParams};
use racestack_core::{ConeColor, MissionKind, TrackError};

#[test]
fn rows_map_to_cones() {
    let text = "color,x,y\nblue,0.0,5.0\nyellow,3.0,5.0\nblue,0.0,10.0\nyellow,3.0,10.0\norange,0.0,0.0\norange,3.0,0.0\n";
    let t = parse_track(text).unwrap();
    assert_eq!(t.cones.len(), 6);
    assert_eq!(t.cones[0].color, ConeColor::Blue);
    assert_eq!((t.cones[1].position.x, t.cones[1].position.y), (3.0, 5.0));
}

#[test]
fn unknown_tag_names_line() {
    let text = "color,x,y\nblue,0,5\npurple,1,1\n";
    let e = parse_track(text).unwrap_err();
    assert!(matches!(e, TrackError::Parse { line: 3, .. }), "{e}");
}

#[test]
fn empty_track_is_rejected() {
    assert!(matches!(parse_track("color,x,y\n"), Err(TrackError::Validation { .. })));
}

#[test]
fn three_per_color_gives_nine_rows() {
    let mut text = String::from("color,x,y\n");
    for (i, c) in ["blue", "yellow", "orange"].iter().enumerate() {
        for k in 0..3 {
            text.push_str(&format!("{c},{},{}\n", 3.0 * i as f64, 5.0 * k as f64));
        }
    }
    let out = format_track(&parse_track(&text).unwrap()).unwrap();
    assert_eq!(out.lines().count(), 10);
}

#[test]
fn save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..20 {
        let kind = [MissionKind::Trackdrive, MissionKind::Skidpad, MissionKind::Acceleration][seed as usize % 3];
        let t = generate_track(seed, kind, &TrackGenParams::for_kind(kind)).unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        save_track(&t, &a).unwrap();
        save_track(&load_track(&a).unwrap(), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}

#[test]
fn acceleration_rows_are_parallel_and_three_meters_apart() {
    let t = generate_track(1, MissionKind::Acceleration, &TrackGenParams::for_kind(MissionKind::Acceleration)).unwrap();
    let blue = t.side(ConeColor::Blue);
    let yellow = t.side(ConeColor::Yellow);
    let xb = blue[0].position.x;
    let xy = yellow[0].position.x;
    assert!(blue.iter().all(|c| (c.position.x - xb).abs() < 1e-9));
    assert!(yellow.iter().all(|c| (c.position.x - xy).abs() < 1e-9));
    assert!(((xb - xy).abs() - 3.0).abs() < 1e-9);
}

#[test]
fn same_seed_same_track() {
    let p = TrackGenParams::default();
    assert_eq!(
        generate_track(7, MissionKind::Trackdrive, &p).unwrap(),
        generate_track(7, MissionKind::Trackdrive, &p).unwrap()
    );
}

#[test]
fn generated_boundaries_never_intersect() {
    for seed in [7, 8, 9] {
        let t = generate_track(seed, MissionKind::Trackdrive, &TrackGenParams::default()).unwrap();
        let ring = |c: ConeColor| {
            let v: Vec<_> = t.side(c).iter().map(|c| c.position).collect();
            let n = v.len();
            (0..n).map(|i| (v[i], v[(i + 1) % n])).collect::<Vec<_>>()
        };
        let (l, r) = (ring(ConeColor::Blue), ring(ConeColor::Yellow));
        for a in &l {
            for b in &r {
                assert!(!segments_intersect(a.0, a.1, b.0, b.1), "seed {seed}");
            }
        }
    }
}

#[test]
fn corpus_of_fifty_generates_quickly() {
    let start = std::time::Instant::now();
    for seed in 0..50 {
        generate_track(seed, MissionKind::Trackdrive, &TrackGenParams::default()).unwrap();
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}
