//! Compact U-Net producing a foreground confidence map.

use ismo_nn::init::leaky_gain;
use ismo_nn::layers::{BatchNorm2d, Conv2d, LeakyRelu, MaxPool2d, Sigmoid, UpsampleBilinear2x};
use ismo_nn::{join, Mode, Module, Param, Scalar, Sequential, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::binarize::ThresholdMethod;
use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    /// Number of down-sampling (and up-sampling) blocks.
    pub depth: usize,
    /// Channels of the first block; doubled at each level.
    pub base_channels: usize,
    pub threshold: ThresholdMethod,
    pub input_size: usize,
    pub seed: u64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self { depth: 3, base_channels: 4, threshold: ThresholdMethod::Otsu, input_size: 224, seed: 0 }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_channels == 0 {
            return Err(CoreError::Argument(format!(
                "depth={} and base_channels={} must be positive",
                self.depth, self.base_channels
            )));
        }
        if self.input_size >> self.depth == 0 {
            return Err(CoreError::Argument(format!(
                "input_size={} too small for depth={}",
                self.input_size, self.depth
            )));
        }
        Ok(())
    }
}

fn conv_bn_relu<T: Scalar>(cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Sequential<T> {
    Sequential::new()
        .push("conv", Conv2d::new(cin, cout, 3, 1, 1, false, leaky_gain(0.0), rng))
        .push("bn", BatchNorm2d::new(cout))
        .push("act", LeakyRelu::relu())
}

/// Upsample, zero-pad to the skip's size, concatenate, convolve.
struct UpBlock<T: Scalar> {
    reduce: Conv2d<T>,
    up: UpsampleBilinear2x<T>,
    fuse: Sequential<T>,
    skip_channels: usize,
    pad: Option<(usize, usize, usize, usize)>,
}

impl<T: Scalar> UpBlock<T> {
    fn new(cin: usize, cskip: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            reduce: Conv2d::new(cin, cskip, 1, 1, 0, true, 1.0, rng),
            up: UpsampleBilinear2x::new(),
            fuse: conv_bn_relu(2 * cskip, cskip, rng),
            skip_channels: cskip,
            pad: None,
        }
    }

    fn forward(&mut self, x: &Tensor<T>, skip: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let u = self.up.forward(&self.reduce.forward(x, mode), mode);
        let (_, _, uh, uw) = u.dims4();
        let (_, _, sh, sw) = skip.dims4();
        let (top, left) = ((sh - uh) / 2, (sw - uw) / 2);
        self.pad = Some((top, left, uh, uw));
        let padded = pad_to(&u, sh, sw, top, left);
        self.fuse.forward(&Tensor::concat_channels(skip, &padded), mode)
    }

    /// Returns gradients for `(x, skip)`.
    fn backward(&mut self, grad: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
        let g = self.fuse.backward(grad);
        let (g_skip, g_up) = g.split_channels(self.skip_channels);
        let (top, left, uh, uw) = self.pad.take().expect("backward before forward");
        let g_up = crop(&g_up, top, left, uh, uw);
        let g_x = self.reduce.backward(&self.up.backward(&g_up));
        (g_x, g_skip)
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.reduce.visit(&join(prefix, "reduce"), f);
        self.fuse.visit(&join(prefix, "fuse"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.reduce.visit_mut(&join(prefix, "reduce"), f);
        self.fuse.visit_mut(&join(prefix, "fuse"), f);
    }
}

fn pad_to<T: Scalar>(x: &Tensor<T>, h: usize, w: usize, top: usize, left: usize) -> Tensor<T> {
    let (n, c, xh, xw) = x.dims4();
    if (xh, xw) == (h, w) {
        return x.clone();
    }
    let mut out = Tensor::zeros(&[n, c, h, w]);
    let (src, dst) = (x.data(), out.data_mut());
    for p in 0..n * c {
        for y in 0..xh {
            let s = p * xh * xw + y * xw;
            let d = p * h * w + (y + top) * w + left;
            dst[d..d + xw].copy_from_slice(&src[s..s + xw]);
        }
    }
    out
}

fn crop<T: Scalar>(x: &Tensor<T>, top: usize, left: usize, h: usize, w: usize) -> Tensor<T> {
    let (n, c, xh, xw) = x.dims4();
    if (xh, xw) == (h, w) {
        return x.clone();
    }
    let mut out = Tensor::zeros(&[n, c, h, w]);
    let (src, dst) = (x.data(), out.data_mut());
    for p in 0..n * c {
        for y in 0..h {
            let s = p * xh * xw + (y + top) * xw + left;
            let d = p * h * w + y * w;
            dst[d..d + w].copy_from_slice(&src[s..s + w]);
        }
    }
    out
}

/// Encoder levels halve the resolution with 2x2 max pooling; decoder levels
/// upsample bilinearly and fuse the matching encoder features. The output
/// passes through a sigmoid.
pub struct OdNet<T: Scalar> {
    inc: Sequential<T>,
    downs: Vec<Sequential<T>>,
    ups: Vec<UpBlock<T>>,
    head: Conv2d<T>,
    squash: Sigmoid<T>,
}

impl<T: Scalar> OdNet<T> {
    pub fn new(cfg: &SegmenterConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let ch: Vec<usize> = (0..=cfg.depth).map(|i| cfg.base_channels << i).collect();
        let inc = conv_bn_relu(3, ch[0], &mut rng);
        let downs = (1..=cfg.depth)
            .map(|i| {
                let block = conv_bn_relu(ch[i - 1], ch[i], &mut rng);
                Sequential::new().push("pool", MaxPool2d::new(2, 2, 0)).push("block", block)
            })
            .collect();
        let ups = (0..cfg.depth).rev().map(|i| UpBlock::new(ch[i + 1], ch[i], &mut rng)).collect();
        let head = Conv2d::new(ch[0], 1, 1, 1, 0, true, 1.0, &mut rng);
        Ok(Self { inc, downs, ups, head, squash: Sigmoid::new() })
    }
}

impl<T: Scalar> Module<T> for OdNet<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let mut feats = vec![self.inc.forward(x, mode)];
        for down in &mut self.downs {
            let next = down.forward(feats.last().unwrap(), mode);
            feats.push(next);
        }
        let depth = self.downs.len();
        let mut h = feats[depth].clone();
        for (k, up) in self.ups.iter_mut().enumerate() {
            h = up.forward(&h, &feats[depth - 1 - k], mode);
        }
        self.squash.forward(&self.head.forward(&h, mode), mode)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let depth = self.downs.len();
        let mut g = self.head.backward(&self.squash.backward(grad));
        let mut skip_grads: Vec<Option<Tensor<T>>> = (0..depth).map(|_| None).collect();
        for k in (0..depth).rev() {
            let (gx, gs) = self.ups[k].backward(&g);
            skip_grads[depth - 1 - k] = Some(gs);
            g = gx;
        }
        for k in (0..depth).rev() {
            let mut gk = self.downs[k].backward(&g);
            gk.add_assign(skip_grads[k].as_ref().expect("skip gradient"));
            g = gk;
        }
        self.inc.backward(&g)
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.inc.visit(&join(prefix, "inc"), f);
        for (i, d) in self.downs.iter().enumerate() {
            d.visit(&join(prefix, &format!("down{i}")), f);
        }
        for (i, u) in self.ups.iter().enumerate() {
            u.visit(&join(prefix, &format!("up{i}")), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.inc.visit_mut(&join(prefix, "inc"), f);
        for (i, d) in self.downs.iter_mut().enumerate() {
            d.visit_mut(&join(prefix, &format!("down{i}")), f);
        }
        for (i, u) in self.ups.iter_mut().enumerate() {
            u.visit_mut(&join(prefix, &format!("up{i}")), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
