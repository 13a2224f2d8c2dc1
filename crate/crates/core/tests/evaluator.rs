mod common;

use common::*;
use ismo_core::evaluator::*;
use ismo_core::geometry::generate_dataset;
use ismo_core::reconstructor::Reconstructor;
use ismo_core::segmenter::{Segmenter, SegmenterConfig};
use ismo_core::CoreError;
use ismo_nn::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn e3d_matches_double_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let (n, r, c) = (rng.random_range(1..4), rng.random_range(2..12), rng.random_range(2..12));
        let len = n * 3 * r * c;
        let p: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = e3d(&Tensor::from_vec(&[n, 3, r, c], p.clone()).unwrap(), &Tensor::from_vec(&[n, 3, r, c], g.clone()).unwrap());
        assert!(rel_close(got.unwrap(), e3d_oracle(&p, &g, n, r, c), 1e-9));
    }
}

#[test]
fn oracle_predictions_score_zero() {
    let ds = generate_dataset(&tiny_dataset_config(10)).unwrap();
    let frames = ds.test_frames();
    let preds: Vec<_> = frames.iter().map(|&i| surface_tensor(&ds.states[ds.frames[i].state_id as usize])).collect();
    let r = evaluate_predictions(&ds, &frames, &preds, false).unwrap();
    assert_eq!((r.e3d_mean, r.e3d_std, r.sad_mean), (0.0, 0.0, 0.0));
    assert_eq!(r.frames, frames.len());
    assert_eq!(r.per_texture.values().map(|t| t.stats.count).sum::<usize>(), frames.len());
    assert_eq!(r.per_illumination.values().map(|t| t.count).sum::<usize>(), frames.len());
    assert!(r.unknown_textures.is_some() && r.known_textures.is_some());
    let zeros: Vec<_> = preds.iter().map(|p| Tensor::zeros(p.shape())).collect();
    let r = evaluate_predictions(&ds, &frames, &zeros, false).unwrap();
    assert_eq!(r.e3d_mean, 1.0);
}

#[test]
fn model_evaluation_and_occlusion_sweep() {
    let ds = generate_dataset(&tiny_dataset_config(20)).unwrap();
    let mut rec = Reconstructor::new(&tiny_rec_config()).unwrap();
    randomize_head(&mut rec.net, 3);
    let frames = ds.test_frames();
    let report = evaluate(&mut rec, None, &ds, &frames, &EvalOptions::default()).unwrap();
    assert!(report.e3d_mean > 0.0 && report.e3d_mean.is_finite());
    assert!(evaluate(&mut rec, None, &ds, &[], &EvalOptions::default()).is_err());

    let base = occlusion_frames(&ds, 3, 0).unwrap();
    assert!(!base.is_empty() && base.iter().all(|f| frames.contains(f)));
    let cfg = OcclusionConfig { radii: vec![0, 2, 4], counts: vec![0, 1, 3], images_per_cell: 2, base_frames: 3, ..Default::default() };
    let a = occlusion_sweep(&mut rec, None, &ds, &base, &cfg).unwrap();
    let b = occlusion_sweep(&mut rec, None, &ds, &base, &cfg).unwrap();
    assert_eq!(a, b);
    let direct = evaluate(&mut rec, None, &ds, &base, &EvalOptions { batch_size: base.len(), ..Default::default() }).unwrap();
    assert_eq!(a.baseline.to_bits(), direct.e3d_mean.to_bits());
    for (ci, &count) in cfg.counts.iter().enumerate() {
        for (ri, &radius) in cfg.radii.iter().enumerate() {
            if count == 0 || radius == 0 {
                assert_eq!(a.e3d[ci][ri].to_bits(), a.baseline.to_bits());
            }
        }
    }
    assert_ne!(a.e3d[2][2], a.baseline);
    let big = OcclusionConfig { radii: vec![33], ..cfg };
    assert!(matches!(occlusion_sweep(&mut rec, None, &ds, &base, &big), Err(CoreError::Argument(_))));
}

#[test]
fn throughput_statistics() {
    let ds = generate_dataset(&tiny_dataset_config(6)).unwrap();
    let mut rec = Reconstructor::new(&tiny_rec_config()).unwrap();
    let mut seg = Segmenter::new(SegmenterConfig { depth: 2, input_size: 32, ..Default::default() }).unwrap();
    let imgs: Vec<_> = ds.frames.iter().take(2).map(|f| f.image.clone()).collect();
    let t = measure_throughput(&mut rec, &mut seg, &imgs, 3, 10).unwrap();
    for s in [&t.full_pipeline, &t.reconstruct_only] {
        assert_eq!(s.samples.len(), 10);
        assert!(s.min <= s.mean && s.mean <= s.max && s.min <= s.p50 && s.p99 <= s.max);
    }
    assert!(measure_throughput(&mut rec, &mut seg, &imgs, 2, 10).is_err());
    assert!(measure_throughput(&mut rec, &mut seg, &imgs, 3, 9).is_err());
}

#[test]
fn plots_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("h.png");
    plot::save(&plot::histogram(&[0.1, 0.2, 0.3], 10, 160, 120), &p).unwrap();
    assert_eq!(image::open(&p).unwrap().width(), 160);
}

proptest! {
    #[test]
    fn e3d_is_scale_invariant(seed in any::<u64>(), k in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..2 * 3 * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..2 * 3 * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = |v: &[f64], s: f64| Tensor::from_vec(&[2, 3, 4, 4], v.iter().map(|x| x * s).collect()).unwrap();
        let a = e3d(&t(&p, 1.0), &t(&g, 1.0)).unwrap();
        let b = e3d(&t(&p, k), &t(&g, k)).unwrap();
        prop_assert!(rel_close(a, b, 1e-12));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn population_std_matches_definition(xs in proptest::collection::vec(-10.0f64..10.0, 1..40)) {
        let (m, s) = mean_std(&xs);
        let n = xs.len() as f64;
        let m2 = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m2) * (x - m2)).sum::<f64>() / n;
        prop_assert!((m - m2).abs() < 1e-12 && (s - var.sqrt()).abs() < 1e-12);
    }
}
