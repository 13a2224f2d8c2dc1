mod common;

use common::*;
use ismo_core::losses::*;
use ismo_nn::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut ChaCha8Rng) -> (usize, usize, usize, Vec<f64>) {
    let (n, r, c) = (rng.random_range(1..4), rng.random_range(3..9), rng.random_range(3..9));
    let v = (0..n * 3 * r * c).map(|_| rng.random_range(-2.0..2.0)).collect();
    (n, r, c, v)
}

fn tensor(n: usize, r: usize, c: usize, v: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(&[n, 3, r, c], v).unwrap()
}

#[test]
fn surface_losses_match_scalar_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (n, r, c, p) = random_batch(&mut rng);
        let g: Vec<f64> = p.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
        let got = loss_3d(&tensor(n, r, c, p.clone()), &tensor(n, r, c, g.clone())).unwrap();
        assert!(rel_close(got, l3d_oracle(&p, &g, n), 1e-9));
        let sigma = rng.random_range(0.5..2.0);
        let cfg = IsometryConfig { sigma, kernel_size: 5, ..Default::default() };
        let got = loss_iso(&tensor(n, r, c, p.clone()), &cfg).unwrap();
        assert!(rel_close(got, liso_oracle(&p, n, r, c, sigma, 5), 1e-9));
    }
}

#[test]
fn adversarial_losses_match_scalar_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let k = rng.random_range(1..9);
        let real: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..0.99)).collect();
        let fake: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..0.99)).collect();
        assert!(rel_close(loss_adv_generator(&fake).unwrap(), bce_generator_oracle(&fake), 1e-9));
        assert!(rel_close(loss_adv_discriminator(&real, &fake).unwrap(), bce_discriminator_oracle(&real, &fake), 1e-9));
    }
}

#[test]
fn bce_spot_values() {
    assert!((loss_adv_generator(&[0.5; 8]).unwrap() - 0.6931).abs() < 1e-4);
    assert!((loss_adv_discriminator(&[0.5; 8], &[0.5; 8]).unwrap() - 1.3863).abs() < 1e-4);
    let (g, _) = generator_bce_logits(&[0.0; 4]);
    let (d, _, _) = discriminator_bce_logits(&[0.0; 4], &[0.0; 4]);
    assert!((g - 0.6931).abs() < 1e-4 && (d - 1.3863).abs() < 1e-4);
}

#[test]
fn empty_and_saturated_probabilities() {
    assert!(loss_adv_generator(&[]).is_err());
    assert!(loss_adv_discriminator(&[0.5], &[]).is_err());
    let v = loss_adv_generator(&[0.0]).unwrap();
    assert!(v.is_finite() && (v + BCE_EPS.ln()).abs() < 1e-12);
}

#[test]
fn surface_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (n, r, c) = (2, 6, 7);
    let mut p: Vec<f64> = (0..n * 3 * r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g: Vec<f64> = p.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
    let cfg = IsometryConfig::default();
    let gt = tensor(n, r, c, g);
    let total = |x: &[f64]| {
        let t = tensor(n, r, c, x.to_vec());
        loss_3d(&t, &gt).unwrap() + loss_iso(&t, &cfg).unwrap()
    };
    let pt = tensor(n, r, c, p.clone());
    let (_, a) = loss_3d_grad(&pt, &gt).unwrap();
    let (_, b) = loss_iso_grad(&pt, &cfg).unwrap();
    for i in 0..p.len() {
        let num = central_diff(&mut p, i, 1e-4, total);
        let ana = a.data()[i] + b.data()[i];
        assert!(close(ana, num, 1e-3, 1e-9), "coordinate {i}: {ana} vs {num}");
    }
}

#[test]
fn logits_forms_match_probability_forms() {
    let z = [-3.0, -0.2, 0.0, 1.5, 4.0];
    let p: Vec<f64> = z.iter().map(|&v| 1.0 / (1.0 + (-v as f64).exp())).collect();
    let (g, gg) = generator_bce_logits(&z);
    assert!(rel_close(g, loss_adv_generator(&p).unwrap(), 1e-12));
    let (d, gr, gf) = discriminator_bce_logits(&z, &z[..3]);
    assert!(rel_close(d, loss_adv_discriminator(&p, &p[..3]).unwrap(), 1e-12));
    for (i, &zi) in z.iter().enumerate() {
        let mut x = z.to_vec();
        let num = central_diff(&mut x, i, 1e-5, |x| generator_bce_logits(x).0);
        assert!(close(gg[i], num, 1e-6, 1e-10));
        let num = central_diff(&mut x, i, 1e-5, |x| discriminator_bce_logits(x, &z[..3]).0);
        assert!(close(gr[i], num, 1e-6, 1e-10), "{zi}");
    }
    assert_eq!(gf.len(), 3);
}

#[test]
fn total_rejects_non_finite_terms() {
    assert!(LossBreakdown::new(1.0, f64::NAN, 0.0, 0.0).is_err());
    let b = LossBreakdown::new(1.0, 2.0, 3.0, 4.0).unwrap();
    assert_eq!(loss_total(&b).unwrap(), 10.0);
    assert_eq!(b.total, 10.0);
}

proptest! {
    #[test]
    fn smoothing_transpose_is_the_adjoint(seed in any::<u64>(), r in 2usize..8, c in 2usize..8, zero in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = IsometryConfig {
            sigma: rng.random_range(0.3..2.0),
            kernel_size: 3 + 2 * rng.random_range(0..3),
            padding: if zero { Padding::Zero } else { Padding::Replicate },
            ..Default::default()
        };
        let x = tensor(1, r, c, (0..3 * r * c).map(|_| rng.random_range(-1.0..1.0)).collect());
        let y = tensor(1, r, c, (0..3 * r * c).map(|_| rng.random_range(-1.0..1.0)).collect());
        let sx = smooth_batch(&x, &cfg).unwrap();
        let sty = smooth_batch_transpose(&y, &cfg).unwrap();
        let lhs: f64 = sx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(sty.data()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn smoothing_preserves_constants_and_planes(v in -5.0f64..5.0, r in 5usize..10) {
        let cfg = IsometryConfig::default();
        let x = tensor(1, r, r, vec![v; 3 * r * r]);
        prop_assert!(loss_iso(&x, &cfg).unwrap() < 1e-10);
    }

    #[test]
    fn surface_losses_are_nonnegative_and_zero_on_match(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, r, c, p) = random_batch(&mut rng);
        let t = tensor(n, r, c, p);
        prop_assert_eq!(loss_3d(&t, &t).unwrap(), 0.0);
        prop_assert!(loss_iso(&t, &IsometryConfig::default()).unwrap() >= 0.0);
    }
}
