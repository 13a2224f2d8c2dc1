mod common;

use common::*;
use ismo_core::adversary::{Discriminator, DiscriminatorConfig};
use ismo_core::geometry::SurfaceState;
use ismo_core::reconstructor::*;
use ismo_nn::{Checkpoint, Mode, ModuleExt, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], scale: f64, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

#[test]
fn shape_pins() {
    let full = RecNetConfig::full();
    let s = full.shapes().unwrap();
    assert_eq!(s.output, (73, 73));
    let mut net = RecNet::<f32>::new(&full).unwrap();
    let y = net.forward_checked(&Tensor::zeros(&[1, 3, 224, 224]), Mode::Eval).unwrap();
    assert_eq!(y.shape(), &[1, 3, 73, 73]);
    let reduced = RecNetConfig::reduced().shapes().unwrap();
    assert_eq!(reduced.latent(), (11, 11, 256));
    assert_eq!(reduced.encoder.len() + 2, s.encoder.len());
    let dc = DiscriminatorConfig::default();
    assert_eq!(dc.pre_head_shape().unwrap(), (7, 7, 64));
    assert_eq!(dc.head_width().unwrap(), 3136);
    let mut d = Discriminator::<f32>::new(&dc).unwrap();
    assert_eq!(d.features(&Tensor::zeros(&[2, 3, 73, 73]), Mode::Eval).unwrap().shape(), &[2, 64, 7, 7]);
}

#[test]
fn parameter_counts() {
    let full = count_parameters(&RecNetConfig::full()).unwrap();
    let reduced = count_parameters(&RecNetConfig::reduced()).unwrap();
    assert!(reduced < full);
    assert_eq!(Reconstructor::new(&RecNetConfig::full()).unwrap().count_parameters(), full);
}

#[test]
fn wrong_input_is_a_shape_error() {
    let mut net = RecNet::<f32>::new(&tiny_rec_config()).unwrap();
    assert!(net.forward_checked(&Tensor::zeros(&[1, 3, 30, 32]), Mode::Eval).is_err());
    assert!(net.forward_checked(&Tensor::zeros(&[1, 1, 32, 32]), Mode::Eval).is_err());
}

#[test]
fn generator_adversarial_gradient_matches_finite_differences() {
    let mut g = RecNet::<f64>::new(&tiny_rec_config()).unwrap();
    let mut d = Discriminator::<f64>::new(&tiny_disc_config()).unwrap();
    let x = random(&[2, 3, 32, 32], 1.0, 1);
    let r = check_generator_weights(&mut g, &mut d, &x, 0.2, 1e-4, 2);
    assert!(r.sampled() > 50 && r.passes(), "{r:?}");
}

#[test]
fn discriminator_gradient_matches_finite_differences() {
    let mut d = Discriminator::<f64>::new(&tiny_disc_config()).unwrap();
    let real = random(&[3, 3, 16, 16], 1.0, 3);
    let fake = random(&[3, 3, 16, 16], 1.0, 4);
    let r = check_discriminator_weights(&mut d, &real, &fake, 0.2, 1e-4, 5);
    assert!(r.sampled() > 50 && r.passes(), "{r:?}");
}

#[test]
fn checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = Reconstructor::new(&RecNetConfig { seed: 4, ..tiny_rec_config() }).unwrap();
    let p = dir.path().join("g.ckpt");
    a.checkpoint().save(&p).unwrap();
    let mut b = Reconstructor::from_checkpoint(&Checkpoint::load(&p).unwrap()).unwrap();
    let img = image::RgbImage::from_fn(32, 32, |x, y| image::Rgb([x as u8 * 7, y as u8 * 7, 50]));
    assert_eq!(a.reconstruct(&img).unwrap().points(), b.reconstruct(&img).unwrap().points());

    let d = Discriminator::<f32>::new(&tiny_disc_config()).unwrap();
    let p = dir.path().join("d.ckpt");
    d.checkpoint().save(&p).unwrap();
    let mut e = Discriminator::from_checkpoint(&Checkpoint::load(&p).unwrap()).unwrap();
    assert_eq!(e.flat_values(), d.flat_values());
    assert!(Reconstructor::from_checkpoint(&Checkpoint::load(&p).unwrap()).is_err());
    let s = e.discriminate(&SurfaceState::rest(0, 16, 16)).unwrap();
    assert!((0.0..=1.0).contains(&s));
}

#[test]
fn networks_are_seeded() {
    let a = RecNet::<f32>::new(&tiny_rec_config()).unwrap();
    let b = RecNet::<f32>::new(&tiny_rec_config()).unwrap();
    let c = RecNet::<f32>::new(&RecNetConfig { seed: 9, ..tiny_rec_config() }).unwrap();
    assert_eq!(a.flat_values(), b.flat_values());
    assert_ne!(a.flat_values(), c.flat_values());
}
