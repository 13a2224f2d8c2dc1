//! Rec-Net: residual encoder-decoder regressing a point grid from an image.

use image::RgbImage;
use ismo_nn::init::leaky_gain;
use ismo_nn::layers::{BatchNorm2d, Conv2d, ConvTranspose2d, LeakyRelu, MaxPool2d};
use ismo_nn::{im2col::Window, join, Checkpoint, Mode, Module, ModuleExt, Param, Scalar, Sequential, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::config_hash;
use crate::error::{CoreError, Result};
use crate::geometry::SurfaceState;
use crate::raster::images_to_batch;

pub const CHECKPOINT_KIND: &str = "recnet";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecNetVariant {
    Full,
    Reduced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Convolution (same padding), batch norm, leaky ReLU, max pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub channels: usize,
    pub kernel: usize,
    pub pool: PoolSpec,
}

/// Transposed convolution, batch norm, leaky ReLU, then an optional
/// additive skip from the output of encoder block `skip_from`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub skip_from: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecNetConfig {
    pub variant: RecNetVariant,
    pub input_size: usize,
    pub in_channels: usize,
    pub encoder: Vec<EncoderSpec>,
    pub decoder: Vec<DecoderSpec>,
    /// Final linear convolution to three coordinates.
    pub head_kernel: usize,
    pub leaky_slope: f64,
    pub seed: u64,
}

fn pool(kernel: usize, stride: usize, padding: usize) -> PoolSpec {
    PoolSpec { kernel, stride, padding }
}

fn enc(channels: usize, p: PoolSpec) -> EncoderSpec {
    EncoderSpec { channels, kernel: 3, pool: p }
}

fn dec(channels: usize, kernel: usize, stride: usize, padding: usize, skip_from: Option<usize>) -> DecoderSpec {
    DecoderSpec { channels, kernel, stride, padding, skip_from }
}

impl Default for RecNetConfig {
    fn default() -> Self {
        Self::full()
    }
}

/// Spatial sizes and channel counts after each block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecNetShapes {
    pub encoder: Vec<(usize, usize)>,
    pub decoder: Vec<(usize, usize)>,
    pub output: (usize, usize),
}

impl RecNetShapes {
    /// `(size, size, channels)` of the bottleneck.
    pub fn latent(&self) -> (usize, usize, usize) {
        let (c, s) = *self.encoder.last().expect("at least one encoder block");
        (s, s, c)
    }
}

impl RecNetConfig {
    /// 224 -> 73 -> 37 -> 19 -> 10 -> 5 and back up to a 73x73 grid.
    pub fn full() -> Self {
        Self {
            variant: RecNetVariant::Full,
            input_size: 224,
            in_channels: 3,
            encoder: vec![
                enc(16, pool(6, 3, 0)),
                enc(32, pool(3, 2, 1)),
                enc(64, pool(3, 2, 1)),
                enc(128, pool(3, 2, 1)),
                enc(256, pool(2, 2, 0)),
            ],
            decoder: vec![
                dec(128, 4, 2, 1, Some(3)),
                dec(64, 3, 2, 1, Some(2)),
                dec(32, 3, 2, 1, Some(1)),
                dec(16, 3, 2, 1, Some(0)),
                dec(16, 3, 1, 1, None),
            ],
            head_kernel: 3,
            leaky_slope: 0.2,
            seed: 0,
        }
    }

    /// Two encoder and two decoder blocks fewer, an 11x11x256 latent and a
    /// 31x31 output grid.
    pub fn reduced() -> Self {
        Self {
            variant: RecNetVariant::Reduced,
            encoder: vec![enc(64, pool(8, 7, 0)), enc(128, pool(3, 2, 1)), enc(256, pool(6, 1, 0))],
            decoder: vec![dec(64, 3, 3, 1, Some(0)), dec(32, 3, 1, 1, None), dec(32, 3, 1, 1, None)],
            ..Self::full()
        }
    }

    pub fn for_variant(v: RecNetVariant) -> Self {
        match v {
            RecNetVariant::Full => Self::full(),
            RecNetVariant::Reduced => Self::reduced(),
        }
    }

    /// Same topology with every width mapped through `f`.
    pub fn with_widths(mut self, f: impl Fn(usize) -> usize) -> Self {
        self.encoder.iter_mut().for_each(|e| e.channels = f(e.channels).max(1));
        self.decoder.iter_mut().for_each(|d| d.channels = f(d.channels).max(1));
        self
    }

    pub fn shapes(&self) -> Result<RecNetShapes> {
        let bad = |m: String| Err(CoreError::Argument(m));
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return bad("rec-net needs at least one encoder and one decoder block".into());
        }
        let mut size = self.input_size;
        let mut encoder = Vec::new();
        for (i, e) in self.encoder.iter().enumerate() {
            if e.kernel % 2 == 0 || e.pool.padding >= e.pool.kernel.max(1) || e.pool.stride == 0 {
                return bad(format!("encoder block {i}: odd conv kernel and pool padding < kernel required"));
            }
            size = Window::new(e.pool.kernel, e.pool.stride, e.pool.padding)
                .out_len(size)
                .ok_or_else(|| CoreError::Argument(format!("encoder block {i}: pool larger than input {size}")))?;
            encoder.push((e.channels, size));
        }
        let mut decoder = Vec::new();
        for (i, d) in self.decoder.iter().enumerate() {
            let grown = (size - 1) * d.stride + d.kernel;
            if d.stride == 0 || grown <= 2 * d.padding {
                return bad(format!("decoder block {i}: invalid transposed convolution"));
            }
            size = grown - 2 * d.padding;
            if let Some(s) = d.skip_from {
                match encoder.get(s) {
                    Some(&(c, sz)) if (c, sz) == (d.channels, size) => {}
                    Some(&(c, sz)) => {
                        return bad(format!(
                            "decoder block {i} is {}x{size}x{size} but its skip from encoder block {s} is {c}x{sz}x{sz}",
                            d.channels
                        ))
                    }
                    None => return bad(format!("decoder block {i}: no encoder block {s}")),
                }
            }
            decoder.push((d.channels, size));
        }
        if self.head_kernel % 2 == 0 {
            return bad("head kernel must be odd".into());
        }
        Ok(RecNetShapes { encoder, decoder, output: (size, size) })
    }

    pub fn output_grid(&self) -> Result<usize> {
        Ok(self.shapes()?.output.0)
    }
}

/// Trainable parameter count, from the configuration alone.
pub fn count_parameters(cfg: &RecNetConfig) -> Result<usize> {
    cfg.shapes()?;
    let mut n = 0;
    let mut cin = cfg.in_channels;
    for e in &cfg.encoder {
        n += cin * e.channels * e.kernel * e.kernel + 2 * e.channels;
        cin = e.channels;
    }
    for d in &cfg.decoder {
        n += cin * d.channels * d.kernel * d.kernel + 2 * d.channels;
        cin = d.channels;
    }
    n += cin * 3 * cfg.head_kernel * cfg.head_kernel + 3;
    let g = cfg.output_grid()?;
    Ok(n + 3 * g * g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Ablation {
    /// Drop the transposed-convolution path of a decoder block.
    Decoder(usize),
    /// Drop the skip input of a decoder block.
    Skip(usize),
}

pub struct RecNet<T: Scalar> {
    config: RecNetConfig,
    encoder: Vec<Sequential<T>>,
    decoder: Vec<Sequential<T>>,
    head: Conv2d<T>,
    /// Per-vertex output offset, starts at the flat rest grid.
    template: Param<T>,
    pub(crate) ablation: Option<Ablation>,
}

impl<T: Scalar> RecNet<T> {
    pub fn new(config: &RecNetConfig) -> Result<Self> {
        config.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let gain = leaky_gain(config.leaky_slope);
        let mut cin = config.in_channels;
        let mut encoder = Vec::new();
        for e in &config.encoder {
            encoder.push(
                Sequential::new()
                    .push("conv", Conv2d::new(cin, e.channels, e.kernel, 1, e.kernel / 2, false, gain, &mut rng))
                    .push("bn", BatchNorm2d::new(e.channels))
                    .push("act", LeakyRelu::new(config.leaky_slope))
                    .push("pool", MaxPool2d::new(e.pool.kernel, e.pool.stride, e.pool.padding)),
            );
            cin = e.channels;
        }
        let mut decoder = Vec::new();
        for d in &config.decoder {
            decoder.push(
                Sequential::new()
                    .push(
                        "convt",
                        ConvTranspose2d::new(cin, d.channels, d.kernel, d.stride, d.padding, false, gain, &mut rng),
                    )
                    .push("bn", BatchNorm2d::new(d.channels))
                    .push("act", LeakyRelu::new(config.leaky_slope)),
            );
            cin = d.channels;
        }
        let head = Conv2d::new(cin, 3, config.head_kernel, 1, config.head_kernel / 2, true, 0.0, &mut rng);
        let g = config.output_grid()?;
        let rest = SurfaceState::rest(0, g, g);
        let mut t = vec![T::zero(); 3 * g * g];
        for (k, p) in rest.points().iter().enumerate() {
            for d in 0..3 {
                t[d * g * g + k] = T::of(p[d]);
            }
        }
        let template = Param::trainable(Tensor::from_vec(&[3, g, g], t).expect("sized to fit"));
        Ok(Self { config: config.clone(), encoder, decoder, head, template, ablation: None })
    }

    pub fn config(&self) -> &RecNetConfig {
        &self.config
    }

    /// Forward pass that stops at the first block producing a non-finite value.
    pub fn forward_checked(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.run(x, mode, true)
    }

    fn run(&mut self, x: &Tensor<T>, mode: Mode, check: bool) -> Result<Tensor<T>> {
        let finite = |t: &Tensor<T>, name: String| {
            if check && !t.all_finite() {
                Err(CoreError::numeric(name, "non-finite activation"))
            } else {
                Ok(())
            }
        };
        let s = self.config.input_size;
        match x.shape() {
            [_, c, h, w] if *c == self.config.in_channels && *h == s && *w == s => {}
            other => {
                return Err(CoreError::Shape(format!(
                    "rec-net expects [N,{},{s},{s}] input, got {other:?}",
                    self.config.in_channels
                )))
            }
        }
        let mut feats: Vec<Tensor<T>> = Vec::with_capacity(self.encoder.len());
        let mut h = x.clone();
        for (i, block) in self.encoder.iter_mut().enumerate() {
            h = block.forward(&h, mode);
            finite(&h, format!("encoder.{i}"))?;
            feats.push(h.clone());
        }
        for (i, block) in self.decoder.iter_mut().enumerate() {
            h = block.forward(&h, mode);
            if self.ablation == Some(Ablation::Decoder(i)) {
                h.fill(T::zero());
            }
            if let Some(s) = self.config.decoder[i].skip_from {
                if self.ablation != Some(Ablation::Skip(i)) {
                    h.add_assign(&feats[s]);
                }
            }
            finite(&h, format!("decoder.{i}"))?;
        }
        let mut out = self.head.forward(&h, mode);
        let t = self.template.value.data();
        for chunk in out.data_mut().chunks_mut(t.len()) {
            chunk.iter_mut().zip(t).for_each(|(o, &v)| *o += v);
        }
        finite(&out, "head".into())?;
        Ok(out)
    }
}

impl<T: Scalar> Module<T> for RecNet<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        self.run(x, mode, false).unwrap_or_else(|e| panic!("{e}"))
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let n_enc = self.encoder.len();
        let mut skip_grads: Vec<Option<Tensor<T>>> = (0..n_enc).map(|_| None).collect();
        let tg = self.template.grad.data_mut();
        for chunk in grad.data().chunks(tg.len()) {
            tg.iter_mut().zip(chunk).for_each(|(a, &v)| *a += v);
        }
        let mut g = self.head.backward(grad);
        for i in (0..self.decoder.len()).rev() {
            if let Some(s) = self.config.decoder[i].skip_from {
                if self.ablation != Some(Ablation::Skip(i)) {
                    match &mut skip_grads[s] {
                        Some(acc) => acc.add_assign(&g),
                        slot => *slot = Some(g.clone()),
                    }
                }
            }
            if self.ablation == Some(Ablation::Decoder(i)) {
                g.fill(T::zero());
            }
            g = self.decoder[i].backward(&g);
        }
        for i in (0..n_enc).rev() {
            if let Some(sg) = &skip_grads[i] {
                g.add_assign(sg);
            }
            g = self.encoder[i].backward(&g);
        }
        g
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (i, b) in self.encoder.iter().enumerate() {
            b.visit(&join(prefix, &format!("encoder{i}")), f);
        }
        for (i, b) in self.decoder.iter().enumerate() {
            b.visit(&join(prefix, &format!("decoder{i}")), f);
        }
        self.head.visit(&join(prefix, "head"), f);
        f(&join(prefix, "template"), &self.template);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (i, b) in self.encoder.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("encoder{i}")), f);
        }
        for (i, b) in self.decoder.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("decoder{i}")), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
        f(&join(prefix, "template"), &mut self.template);
    }
}

/// Inference wrapper: image in, surface out.
pub struct Reconstructor {
    pub net: RecNet<f32>,
}

impl Reconstructor {
    pub fn new(config: &RecNetConfig) -> Result<Self> {
        Ok(Self { net: RecNet::new(config)? })
    }

    pub fn config(&self) -> &RecNetConfig {
        self.net.config()
    }

    pub fn reconstruct(&mut self, image: &RgbImage) -> Result<SurfaceState> {
        let x = images_to_batch(&[image])?;
        let y = self.net.forward_checked(&x, Mode::Eval)?;
        SurfaceState::from_tensor(0, &y)
    }

    pub fn reconstruct_batch(&mut self, images: &[&RgbImage]) -> Result<Tensor<f32>> {
        let x = images_to_batch(images)?;
        self.net.forward_checked(&x, Mode::Eval)
    }

    pub fn count_parameters(&self) -> usize {
        self.net.num_trainable()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Self::checkpoint_of(&self.net)
    }

    pub fn checkpoint_of(net: &RecNet<f32>) -> Checkpoint {
        let cfg = net.config();
        let value = serde_json::to_value(cfg).expect("config serializes");
        Checkpoint::from_module(CHECKPOINT_KIND, value, &config_hash(cfg), net)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != CHECKPOINT_KIND {
            return Err(CoreError::Config(format!("checkpoint holds a '{}', not a {CHECKPOINT_KIND}", ckpt.kind)));
        }
        let config: RecNetConfig = serde_json::from_value(ckpt.config.clone())
            .map_err(|e| CoreError::Config(format!("rec-net config in checkpoint: {e}")))?;
        let mut r = Self::new(&config)?;
        ckpt.load_into(&mut r.net)?;
        Ok(r)
    }
}
