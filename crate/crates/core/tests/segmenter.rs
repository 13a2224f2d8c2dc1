mod common;

use common::*;
use image::RgbImage;
use ismo_core::raster::{BinaryMask, ConfidenceMap};
use ismo_core::segmenter::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Between-class variance of every split, computed from scratch.
fn otsu_oracle(hist: &[u64; 256]) -> Vec<Option<f64>> {
    (0..256)
        .map(|t| {
            let (lo, hi) = hist.split_at(t + 1);
            let n0: u64 = lo.iter().sum();
            let n1: u64 = hi.iter().sum();
            if n0 == 0 || n1 == 0 {
                return None;
            }
            let m0 = lo.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum::<f64>() / n0 as f64;
            let m1 = hi.iter().enumerate().map(|(i, &c)| (i + t + 1) as f64 * c as f64).sum::<f64>() / n1 as f64;
            let n = (n0 + n1) as f64;
            Some(n0 as f64 / n * n1 as f64 / n * (m0 - m1) * (m0 - m1))
        })
        .collect()
}

#[test]
fn pipeline_matches_flood_fill_on_fifty_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for i in 0..50 {
        let conf = shape(i % 3, &mut rng, 64);
        let truth = BinaryMask::from_fn(64, 64, |x, y| conf.values()[y * 64 + x] >= 0.5);
        let got = extract_object_mask(&binarize(&conf, ThresholdMethod::Otsu));
        assert_eq!(got, flood_fill_oracle(&truth), "shape {i}");
    }
}

#[test]
fn otsu_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let mut hist = [0u64; 256];
        for _ in 0..rng.random_range(2..6) {
            let centre = rng.random_range(0..256usize);
            for _ in 0..rng.random_range(1..500) {
                let b = (centre as i64 + rng.random_range(-20..=20)).clamp(0, 255) as usize;
                hist[b] += 1;
            }
        }
        let Some(t) = otsu_threshold(&hist) else {
            assert!(hist.iter().filter(|&&c| c > 0).count() < 2);
            continue;
        };
        let vars = otsu_oracle(&hist);
        let best = vars.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let chosen = vars[t].expect("threshold splits the histogram");
        assert!(rel_close(chosen, best, 1e-12), "{chosen} vs {best}");
        assert!(vars[..t].iter().flatten().all(|&v| v < best * (1.0 - 1e-12)));
    }
}

#[test]
fn constant_map_falls_back_to_fixed_threshold() {
    let high = ConfidenceMap::from_vec(4, 4, vec![0.7; 16]).unwrap();
    assert_eq!(binarize(&high, ThresholdMethod::Otsu).count(), 16);
    let low = ConfidenceMap::from_vec(4, 4, vec![0.2; 16]).unwrap();
    let img = RgbImage::from_pixel(4, 4, image::Rgb([9, 9, 9]));
    let s = postprocess(&img, low, ThresholdMethod::Otsu).unwrap();
    assert!(s.fallback && s.mask.is_empty());
    assert_eq!(s.segmented, img);
}

#[test]
fn fixed_threshold_parses_and_round_trips() {
    let m: ThresholdMethod = "fixed:0.3".parse().unwrap();
    assert_eq!(m, ThresholdMethod::Fixed(0.3));
    assert_eq!(m.to_string().parse::<ThresholdMethod>().unwrap(), m);
    assert!("fixed:1.5".parse::<ThresholdMethod>().is_err());
    assert!("median".parse::<ThresholdMethod>().is_err());
}

#[test]
fn segmenter_checkpoint_round_trip() {
    let mut a = Segmenter::new(SegmenterConfig { depth: 2, input_size: 32, seed: 5, ..Default::default() }).unwrap();
    let img = RgbImage::from_fn(32, 32, |x, y| image::Rgb([(x * 8) as u8, (y * 8) as u8, 100]));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("od.ckpt");
    a.checkpoint().save(&path).unwrap();
    let mut b = Segmenter::from_checkpoint(&ismo_nn::Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(a.predict_confidence(&img).unwrap().values(), b.predict_confidence(&img).unwrap().values());
    assert!(a.predict_confidence(&RgbImage::new(16, 16)).is_err());
}

proptest! {
    #[test]
    fn contour_fill_matches_flood_fill(seed in any::<u64>(), w in 1usize..24, h in 1usize..24, density in 0.1f64..0.7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density));
        prop_assert_eq!(extract_object_mask(&m), flood_fill_oracle(&m));
    }

    #[test]
    fn masked_image_keeps_only_the_mask(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = RgbImage::from_fn(12, 9, |_, _| image::Rgb([rng.random_range(1..=255), 7, 7]));
        let m = BinaryMask::from_fn(12, 9, |_, _| rng.random_bool(0.5));
        let out = apply_mask(&img, &m).unwrap();
        for (x, y, p) in out.enumerate_pixels() {
            let kept = m.get(x as usize, y as usize);
            prop_assert_eq!(p.0 == img.get_pixel(x, y).0, kept);
        }
    }
}
