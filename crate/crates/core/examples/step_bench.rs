//! Times one forward/backward pass of each network on a batch of 8.

use std::time::Instant;

use ismo_core::adversary::{Discriminator, DiscriminatorConfig};
use ismo_core::reconstructor::{RecNet, RecNetConfig};
use ismo_core::segmenter::{OdNet, SegmenterConfig};
use ismo_nn::{Mode, Module, Tensor};

fn time<M: Module<f32>>(name: &str, net: &mut M, shape: &[usize]) {
    let x = Tensor::full(shape, 0.3f32);
    for _ in 0..2 {
        let y = net.forward(&x, Mode::Train);
        net.backward(&Tensor::full(y.shape(), 1e-3));
    }
    let t = Instant::now();
    let reps = 3;
    for _ in 0..reps {
        let y = net.forward(&x, Mode::Train);
        net.backward(&Tensor::full(y.shape(), 1e-3));
    }
    let fb = t.elapsed().as_secs_f64() / reps as f64;
    let t = Instant::now();
    for _ in 0..reps {
        net.forward(&x, Mode::Eval);
    }
    let f = t.elapsed().as_secs_f64() / reps as f64;
    println!("{name}: fwd+bwd {:.1} ms, fwd {:.1} ms", fb * 1e3, f * 1e3);
}

fn main() {
    let mut rec = RecNet::<f32>::new(&RecNetConfig::full()).unwrap();
    time("recnet full", &mut rec, &[8, 3, 224, 224]);
    let mut d = Discriminator::<f32>::new(&DiscriminatorConfig::default()).unwrap();
    time("discriminator", &mut d, &[8, 3, 73, 73]);
    for base in [4, 8] {
        let mut od = OdNet::<f32>::new(&SegmenterConfig { base_channels: base, ..Default::default() }).unwrap();
        time(&format!("odnet base {base}"), &mut od, &[8, 3, 224, 224]);
    }
}
