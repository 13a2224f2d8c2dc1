//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use ismo_core::adversary::{DiscBlock, DiscriminatorConfig};
use ismo_core::geometry::{DatasetConfig, DeformationConfig, RenderConfig};
use ismo_core::raster::BinaryMask;
use ismo_core::reconstructor::{DecoderSpec, EncoderSpec, PoolSpec, RecNetConfig};
use std::collections::VecDeque;

/// 32x32 images to 16x16 grids.
pub fn tiny_rec_config() -> RecNetConfig {
    let p = |kernel, stride| PoolSpec { kernel, stride, padding: 0 };
    RecNetConfig {
        input_size: 32,
        encoder: vec![
            EncoderSpec { channels: 4, kernel: 3, pool: p(2, 2) },
            EncoderSpec { channels: 8, kernel: 3, pool: p(2, 2) },
        ],
        decoder: vec![DecoderSpec { channels: 4, kernel: 4, stride: 2, padding: 1, skip_from: Some(0) }],
        ..RecNetConfig::full()
    }
}

pub fn tiny_disc_config() -> DiscriminatorConfig {
    let b = |channels, batch_norm| DiscBlock { channels, kernel: 3, stride: 2, padding: 1, batch_norm };
    DiscriminatorConfig { grid: 16, blocks: vec![b(4, false), b(8, true)], ..Default::default() }
}

/// A small dataset rendered at 32x32 with 16x16 surfaces.
pub fn tiny_dataset_config(states: usize) -> DatasetConfig {
    DatasetConfig {
        states,
        deformation: DeformationConfig { grid: 16, ..Default::default() },
        render: RenderConfig { width: 32, height: 32, ..Default::default() },
        ..Default::default()
    }
}

/// `|a - n| <= rel * max(|a|, |n|) + abs`.
pub fn close(a: f64, n: f64, rel: f64, abs: f64) -> bool {
    (a - n).abs() <= rel * a.abs().max(n.abs()) + abs
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// e3d by explicit loops over states, coordinates, rows and columns.
pub fn e3d_oracle(pred: &[f64], gt: &[f64], n: usize, rows: usize, cols: usize) -> f64 {
    let mut total = 0.0;
    for s in 0..n {
        let mut num = 0.0;
        let mut den = 0.0;
        for d in 0..3 {
            for r in 0..rows {
                for c in 0..cols {
                    let k = ((s * 3 + d) * rows + r) * cols + c;
                    num += (gt[k] - pred[k]) * (gt[k] - pred[k]);
                    den += gt[k] * gt[k];
                }
            }
        }
        total += num.sqrt() / den.sqrt();
    }
    total / n as f64
}

pub fn l3d_oracle(pred: &[f64], gt: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..pred.len() {
        s += (pred[i] - gt[i]).abs();
    }
    s / n as f64
}

/// Direct 2-D Gaussian convolution with clamped (replicated) borders.
pub fn smooth_oracle(x: &[f64], n: usize, rows: usize, cols: usize, sigma: f64, size: usize) -> Vec<f64> {
    let r = (size / 2) as i64;
    let mut w = vec![0.0; size * size];
    let mut total = 0.0;
    for i in -r..=r {
        for j in -r..=r {
            let v = (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp();
            w[((i + r) as usize) * size + (j + r) as usize] = v;
            total += v;
        }
    }
    let mut out = vec![0.0; x.len()];
    for p in 0..n * 3 {
        for y in 0..rows as i64 {
            for xx in 0..cols as i64 {
                let mut acc = 0.0;
                for i in -r..=r {
                    for j in -r..=r {
                        let yy = (y + i).clamp(0, rows as i64 - 1) as usize;
                        let xj = (xx + j).clamp(0, cols as i64 - 1) as usize;
                        acc += w[((i + r) as usize) * size + (j + r) as usize] / total * x[p * rows * cols + yy * cols + xj];
                    }
                }
                out[p * rows * cols + y as usize * cols + xx as usize] = acc;
            }
        }
    }
    out
}

pub fn liso_oracle(pred: &[f64], n: usize, rows: usize, cols: usize, sigma: f64, size: usize) -> f64 {
    let s = smooth_oracle(pred, n, rows, cols, sigma, size);
    l3d_oracle(pred, &s, n)
}

pub fn bce_generator_oracle(p: &[f64]) -> f64 {
    let mut s = 0.0;
    for &v in p {
        s -= v.ln();
    }
    s / p.len() as f64
}

pub fn bce_discriminator_oracle(real: &[f64], fake: &[f64]) -> f64 {
    let mut a = 0.0;
    for &v in real {
        a -= v.ln();
    }
    let mut b = 0.0;
    for &v in fake {
        b -= (1.0 - v).ln();
    }
    a / real.len() as f64 + b / fake.len() as f64
}

/// Region enclosed by the largest 8-connected foreground component (holes
/// included), found by flooding the background from outside the raster.
pub fn flood_fill_oracle(m: &BinaryMask) -> Option<BinaryMask> {
    let (w, h) = (m.width(), m.height());
    let mut label = vec![usize::MAX; w * h];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for start in 0..w * h {
        if !m.get(start % w, start / w) || label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut pix = vec![start];
        label[start] = id;
        let mut q = VecDeque::from([start]);
        while let Some(k) = q.pop_front() {
            let (x, y) = ((k % w) as i64, (k / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let nk = ny as usize * w + nx as usize;
                    if m.get(nx as usize, ny as usize) && label[nk] == usize::MAX {
                        label[nk] = id;
                        pix.push(nk);
                        q.push_back(nk);
                    }
                }
            }
        }
        comps.push(pix);
    }
    let mut best: Option<BinaryMask> = None;
    for id in 0..comps.len() {
        // flood outside on a raster padded by one pixel, walls = this component
        let (pw, ph) = (w + 2, h + 2);
        let wall = |x: usize, y: usize| x >= 1 && y >= 1 && x <= w && y <= h && label[(y - 1) * w + x - 1] == id;
        let mut out = vec![false; pw * ph];
        out[0] = true;
        let mut q = VecDeque::from([(0usize, 0usize)]);
        while let Some((x, y)) = q.pop_front() {
            let nbrs = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
            for (nx, ny) in nbrs {
                if nx < pw && ny < ph && !out[ny * pw + nx] && !wall(nx, ny) {
                    out[ny * pw + nx] = true;
                    q.push_back((nx, ny));
                }
            }
        }
        let filled = BinaryMask::from_fn(w, h, |x, y| !out[(y + 1) * pw + x + 1]);
        if best.as_ref().is_none_or(|b| filled.count() > b.count()) {
            best = Some(filled);
        }
    }
    best
}

/// Central finite difference of `f` at `x` along coordinate `i`.
pub fn central_diff(x: &mut [f64], i: usize, eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + eps;
    let plus = f(x);
    x[i] = orig - eps;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * eps)
}

use ismo_core::adversary::Discriminator;
use ismo_core::losses::{discriminator_bce_logits, generator_bce_logits};
use ismo_core::reconstructor::RecNet;
use ismo_nn::init::scaled_normal;
use ismo_nn::{Mode, Module, ModuleExt, Scalar, Tensor};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of comparing analytic gradients with central differences.
///
/// Every sampled weight is compared at `eps`. A weight that disagrees there
/// has an activation or pooling kink within `eps`; it is re-compared at
/// `eps / 100` and counted as `kinked`. A wrong analytic gradient fails at
/// both steps.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub kinked: usize,
    pub failures: usize,
    pub worst: f64,
}

const ABS_FLOOR: f64 = 1e-8;

fn mismatch(a: f64, b: f64) -> bool {
    (a - b).abs() > 1e-3 * a.abs().max(b.abs()) + ABS_FLOOR
}

impl GradCheck {
    fn record(&mut self, ana: f64, mut fd: impl FnMut(f64) -> f64, eps: f64) {
        let num = fd(eps);
        let scale = ana.abs().max(num.abs());
        if mismatch(ana, num) {
            self.kinked += 1;
            if mismatch(ana, fd(eps / 100.0)) {
                self.failures += 1;
            }
            return;
        }
        self.checked += 1;
        if scale > ABS_FLOOR {
            self.worst = self.worst.max((ana - num).abs() / scale);
        }
    }

    pub fn sampled(&self) -> usize {
        self.checked + self.kinked
    }

    pub fn passes(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }
}

fn central(mut f: impl FnMut(f64) -> f64, orig: f64, eps: f64) -> f64 {
    (f(orig + eps) - f(orig - eps)) / (2.0 * eps)
}

fn logits(t: &Tensor<f64>) -> Vec<f64> {
    t.data().to_vec()
}

fn sampled(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, n, k).into_vec()
}

/// Re-draws the zero-initialized output head so the output depends on the
/// input and gradients reach every layer.
pub fn randomize_head<T: Scalar>(g: &mut RecNet<T>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    g.visit_mut("", &mut |name, p| {
        if name == "head.weight" {
            let s = p.value.shape().to_vec();
            p.value = scaled_normal(&s, s[1] * s[2] * s[3], 1.0, &mut rng);
        }
    });
}

pub fn generator_loss(g: &mut RecNet<f64>, d: &mut Discriminator<f64>, x: &Tensor<f64>) -> f64 {
    let pred = g.forward(x, Mode::Train);
    generator_bce_logits(&logits(&d.forward(&pred, Mode::Frozen))).0
}

/// Gradient of the generator's adversarial loss with respect to a sampled
/// fraction of the generator weights, against central differences.
pub fn check_generator_weights(
    g: &mut RecNet<f64>,
    d: &mut Discriminator<f64>,
    x: &Tensor<f64>,
    fraction: f64,
    eps: f64,
    seed: u64,
) -> GradCheck {
    randomize_head(g, seed);
    g.zero_grad();
    let pred = g.forward(x, Mode::Train);
    let z = d.forward(&pred, Mode::Frozen);
    let (_, gz) = generator_bce_logits(&logits(&z));
    let gp = d.backward(&Tensor::from_vec(z.shape(), gz).unwrap());
    g.backward(&gp);
    let grads = g.flat_grads();
    let mut out = GradCheck::default();
    for i in sampled(grads.len(), fraction, seed) {
        let orig = g.flat_value(i);
        let mut at = |v: f64| {
            g.set_flat_value(i, v);
            generator_loss(g, d, x)
        };
        out.record(grads[i], |e| central(&mut at, orig, e), eps);
        g.set_flat_value(i, orig);
    }
    out
}

pub fn discriminator_loss(d: &mut Discriminator<f64>, real: &Tensor<f64>, fake: &Tensor<f64>) -> f64 {
    let zr = logits(&d.forward(real, Mode::Train));
    let zf = logits(&d.forward(fake, Mode::Train));
    discriminator_bce_logits(&zr, &zf).0
}

/// Same check for the discriminator loss and the discriminator weights.
pub fn check_discriminator_weights(
    d: &mut Discriminator<f64>,
    real: &Tensor<f64>,
    fake: &Tensor<f64>,
    fraction: f64,
    eps: f64,
    seed: u64,
) -> GradCheck {
    d.zero_grad();
    let zr = d.forward(real, Mode::Train);
    let (_, gr, _) = discriminator_bce_logits(&logits(&zr), &[0.0]);
    d.backward(&Tensor::from_vec(zr.shape(), gr).unwrap());
    let zf = d.forward(fake, Mode::Train);
    let (_, _, gf) = discriminator_bce_logits(&logits(&zr), &logits(&zf));
    d.backward(&Tensor::from_vec(zf.shape(), gf).unwrap());
    let grads = d.flat_grads();
    let mut out = GradCheck::default();
    for i in sampled(grads.len(), fraction, seed) {
        let orig = d.flat_value(i);
        let mut at = |v: f64| {
            d.set_flat_value(i, v);
            discriminator_loss(d, real, fake)
        };
        out.record(grads[i], |e| central(&mut at, orig, e), eps);
        d.set_flat_value(i, orig);
    }
    out
}

/// Synthetic confidence maps: discs, annuli and several blobs.
pub fn shape(kind: usize, rng: &mut ChaCha8Rng, size: usize) -> ismo_core::raster::ConfidenceMap {
    let s = size as f64;
    let mut blobs = Vec::new();
    let n = if kind == 2 { rng.random_range(2..5) } else { 1 };
    for _ in 0..n {
        let (cx, cy) = (rng.random_range(0.2 * s..0.8 * s), rng.random_range(0.2 * s..0.8 * s));
        let r_out = rng.random_range(0.08 * s..0.3 * s);
        let r_in = if kind == 1 { r_out * rng.random_range(0.3..0.7) } else { 0.0 };
        blobs.push((cx, cy, r_out, r_in));
    }
    let values = (0..size * size)
        .map(|k| {
            let (x, y) = ((k % size) as f64 + 0.5, (k / size) as f64 + 0.5);
            let inside = blobs.iter().any(|&(cx, cy, ro, ri)| {
                let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                d <= ro && d >= ri
            });
            if inside { rng.random_range(0.75f32..1.0) } else { rng.random_range(0.0f32..0.25) }
        })
        .collect();
    ismo_core::raster::ConfidenceMap::from_vec(size, size, values).unwrap()
}
