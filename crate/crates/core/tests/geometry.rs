mod common;

use common::*;
use ismo_core::geometry::*;
use ismo_core::CoreError;
use proptest::prelude::*;

#[test]
fn rest_state_passes_the_audit_exactly() {
    let s = SurfaceState::rest(0, DEFAULT_GRID, DEFAULT_GRID);
    let a = s.edge_audit();
    assert!(a.passes(0.02, 0.05));
    assert!(a.max_rel_dev < 1e-12, "{}", a.max_rel_dev);
    let first = generate_states(1, &DeformationConfig::default(), 3).unwrap();
    assert_eq!(first[0].points(), s.points());
}

#[test]
fn generated_sequence_is_isometric_and_varied() {
    let cfg = DeformationConfig::default();
    let states = generate_states(60, &cfg, 9).unwrap();
    for s in &states {
        assert!(s.edge_audit().passes(cfg.isometry_tolerance, cfg.max_edge_deviation), "state {}", s.state_id);
    }
    let largest = states.iter().map(|s| s.deformation_magnitude()).fold(0.0, f64::max);
    assert!(largest > 0.05, "{largest}");
}

#[test]
fn excessive_deformation_is_rejected() {
    let cfg = DeformationConfig { max_bend: 2.0, ..Default::default() };
    let err = generate_states(4, &cfg, 0).unwrap_err();
    assert!(err.to_string().contains("max_bend"), "{err}");
}

#[test]
fn split_protocols() {
    let s = split_states(200, SplitProtocol::Blocked).unwrap();
    assert_eq!(s.test.len(), 40);
    assert!(s.test.iter().all(|i| i % 100 >= 80));
    let p = split_states(20, SplitProtocol::Blocked).unwrap();
    assert_eq!(p.test, vec![16, 17, 18, 19]);
    assert!(matches!(split_states(4, SplitProtocol::Proportional), Err(CoreError::Split(_))));
}

#[test]
fn schedule_shows_every_texture_of_every_state() {
    let cfg = DatasetConfig { states: 12, ..Default::default() };
    let keys = render_schedule(&cfg);
    assert_eq!(keys.len(), 12 * 4);
    for m in 0..12 {
        let mut t: Vec<u32> = keys.iter().filter(|k| k.state_id == m).map(|k| k.texture_id).collect();
        t.sort_unstable();
        assert_eq!(t, vec![0, 1, 2, 3]);
    }
    let lights: std::collections::BTreeSet<u32> = keys.iter().map(|k| k.illumination_id).collect();
    assert_eq!(lights.len(), 4);
    let full = render_schedule(&DatasetConfig { states: 3, renders_per_state: None, ..Default::default() });
    assert_eq!(full.len(), 3 * 4 * 4 * 2);
}

#[test]
fn dataset_round_trips_and_reports_missing_files() {
    let ds = generate_dataset(&tiny_dataset_config(10)).unwrap();
    assert!(ds.frames.iter().all(|f| !f.footprint.is_empty()));
    assert!(ds.train_frames().iter().all(|&i| ds.is_known_texture(ds.frames[i].texture_id)));
    assert!(ds.test_frames().iter().any(|&i| !ds.is_known_texture(ds.frames[i].texture_id)));
    let dir = tempfile::tempdir().unwrap();
    let m = ds.write(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back.manifest(), m);
    for (a, b) in ds.states.iter().zip(&back.states) {
        assert_eq!(a.points(), b.points());
    }
    for (a, b) in ds.frames.iter().zip(&back.frames) {
        assert_eq!(a.image, b.image);
        assert_eq!(a.footprint, b.footprint);
    }
    std::fs::remove_file(dir.path().join(&m.frames[3].image)).unwrap();
    std::fs::remove_file(dir.path().join(&m.states[1].file)).unwrap();
    match Dataset::load(dir.path()) {
        Err(CoreError::MissingFiles(p)) => assert_eq!(p.len(), 2),
        other => panic!("expected missing files, got {:?}", other.err()),
    }
}

#[test]
fn generation_is_reproducible() {
    let cfg = tiny_dataset_config(6);
    let (a, b) = (generate_dataset(&cfg).unwrap(), generate_dataset(&cfg).unwrap());
    assert_eq!(a.manifest().to_json(), b.manifest().to_json());
    assert!(a.frames.iter().zip(&b.frames).all(|(x, y)| x.image == y.image));
    let c = generate_dataset(&DatasetConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.manifest().config_hash, c.manifest().config_hash);
}

#[test]
fn mask_dataset_round_trip() {
    let ds = generate_dataset(&tiny_dataset_config(6)).unwrap();
    let bgs = procedural_backgrounds(3, 32, 32, 1);
    let cfg = MaskConfig { count: 12, max_shift: 4, ..Default::default() };
    let samples = build_mask_dataset(&ds.frames, &bgs, &cfg).unwrap();
    assert_eq!(samples.len(), 12);
    let dir = tempfile::tempdir().unwrap();
    write_mask_dataset(&samples, &cfg, dir.path()).unwrap();
    let back = load_mask_dataset(dir.path()).unwrap();
    for (a, b) in samples.iter().zip(&back) {
        assert_eq!((a.image.clone(), a.mask.clone()), (b.image.clone(), b.mask.clone()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_states_stay_isometric(seed in any::<u64>(), bend in 0.0f64..0.6, amp in 0.0f64..0.15, waves in 0usize..3) {
        let cfg = DeformationConfig { grid: 25, max_bend: bend, wave_amplitude: amp, waves, ..Default::default() };
        for s in generate_states(5, &cfg, seed).unwrap() {
            prop_assert!(s.edge_audit().passes(cfg.isometry_tolerance, cfg.max_edge_deviation));
        }
    }

    #[test]
    fn splits_partition_the_states(m in 5usize..400) {
        for p in [SplitProtocol::Blocked, SplitProtocol::Proportional] {
            let s = split_states(m, p).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
            prop_assert!(!s.train.is_empty() && !s.test.is_empty());
        }
    }

    #[test]
    fn surface_bytes_round_trip(seed in any::<u64>()) {
        let s = &generate_states(2, &DeformationConfig { grid: 9, ..Default::default() }, seed).unwrap()[1];
        let bytes = s.to_f32_bytes();
        let back = SurfaceState::from_f32_bytes(1, 9, 9, &bytes).unwrap();
        for (a, b) in s.points().iter().zip(back.points()) {
            for d in 0..3 {
                prop_assert!((a[d] - b[d]).abs() < 1e-6);
            }
        }
    }
}
