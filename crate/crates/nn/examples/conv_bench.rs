//! Rough throughput probe for the convolution kernels.

use std::time::Instant;

use ismo_nn::layers::{Conv2d, ConvTranspose2d};
use ismo_nn::{Mode, Module, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cases = [(3usize, 16usize, 224usize, 3usize), (16, 32, 73, 3), (32, 64, 37, 3), (64, 128, 19, 3), (8, 8, 224, 3)];
    for (cin, cout, hw, k) in cases {
        let mut conv = Conv2d::<f32>::new(cin, cout, k, 1, 1, false, 1.0, &mut rng);
        let x = Tensor::full(&[8, cin, hw, hw], 0.5f32);
        let t = Instant::now();
        let y = conv.forward(&x, Mode::Train);
        let f = t.elapsed().as_secs_f64();
        let t = Instant::now();
        conv.backward(&y);
        let b = t.elapsed().as_secs_f64();
        let macs = 8.0 * (hw * hw * cout * cin * k * k) as f64;
        println!("conv {cin}->{cout} @{hw}: fwd {:.1} ms ({:.1} GMAC/s), bwd {:.1} ms", f * 1e3, macs / f / 1e9, b * 1e3);
    }
    let mut ct = ConvTranspose2d::<f32>::new(32, 16, 3, 2, 1, false, 1.0, &mut rng);
    let x = Tensor::full(&[8, 32, 37, 37], 0.5f32);
    let t = Instant::now();
    let y = ct.forward(&x, Mode::Train);
    let f = t.elapsed().as_secs_f64();
    let t = Instant::now();
    ct.backward(&y);
    println!("convT 32->16 37->73: fwd {:.1} ms bwd {:.1} ms", f * 1e3, t.elapsed().as_secs_f64() * 1e3);
}
