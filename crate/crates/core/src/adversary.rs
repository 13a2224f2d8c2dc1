//! Discriminator over point grids.

use ismo_nn::init::leaky_gain;
use ismo_nn::layers::{sigmoid, BatchNorm2d, Conv2d, LeakyRelu, Linear};
use ismo_nn::{im2col::Window, join, Checkpoint, Mode, Module, Param, Scalar, Sequential, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::config_hash;
use crate::error::{CoreError, Result};
use crate::geometry::SurfaceState;

pub const CHECKPOINT_KIND: &str = "discriminator";

/// Convolution, leaky ReLU and optionally batch norm, in that order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscBlock {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub batch_norm: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub grid: usize,
    pub blocks: Vec<DiscBlock>,
    pub leaky_slope: f64,
    pub seed: u64,
}

impl Default for DiscriminatorConfig {
    /// 73 -> 37 -> 19 -> 10 -> 7, ending in 7x7x64 = 3136 features.
    fn default() -> Self {
        let b = |channels, kernel, stride, padding, batch_norm| DiscBlock { channels, kernel, stride, padding, batch_norm };
        Self {
            grid: 73,
            blocks: vec![b(16, 3, 2, 1, false), b(32, 3, 2, 1, true), b(64, 3, 2, 1, true), b(64, 4, 1, 0, true)],
            leaky_slope: 0.2,
            seed: 1,
        }
    }
}

impl DiscriminatorConfig {
    /// `(size, size, channels)` of the activation fed to the head.
    pub fn pre_head_shape(&self) -> Result<(usize, usize, usize)> {
        let mut size = self.grid;
        for (i, b) in self.blocks.iter().enumerate() {
            size = Window::new(b.kernel, b.stride, b.padding)
                .out_len(size)
                .ok_or_else(|| CoreError::Argument(format!("discriminator block {i}: kernel larger than input {size}")))?;
        }
        let c = self.blocks.last().map_or(3, |b| b.channels);
        Ok((size, size, c))
    }

    pub fn head_width(&self) -> Result<usize> {
        let (h, w, c) = self.pre_head_shape()?;
        Ok(h * w * c)
    }
}

pub struct Discriminator<T: Scalar> {
    config: DiscriminatorConfig,
    features: Sequential<T>,
    head: Linear<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(config: &DiscriminatorConfig) -> Result<Self> {
        let width = config.head_width()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let gain = leaky_gain(config.leaky_slope);
        let mut features = Sequential::new();
        let mut cin = 3;
        for (i, b) in config.blocks.iter().enumerate() {
            let mut block = Sequential::new()
                .push("conv", Conv2d::new(cin, b.channels, b.kernel, b.stride, b.padding, true, gain, &mut rng))
                .push("act", LeakyRelu::new(config.leaky_slope));
            if b.batch_norm {
                block = block.push("bn", BatchNorm2d::new(b.channels));
            }
            features = features.push(&format!("block{i}"), block);
            cin = b.channels;
        }
        let head = Linear::new(width, 1, 1.0, &mut rng);
        Ok(Self { config: config.clone(), features, head })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        let g = self.config.grid;
        match x.shape() {
            [_, 3, h, w] if *h == g && *w == g => Ok(()),
            s => Err(CoreError::Shape(format!("discriminator expects [N,3,{g},{g}] surfaces, got {s:?}"))),
        }
    }

    /// Activation before the fully connected head, `[N, C, H, W]`.
    pub fn features(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check(x)?;
        Ok(self.features.forward(x, mode))
    }

    /// Logits `[N, 1]`; probabilities are their sigmoid.
    pub fn forward_logits(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check(x)?;
        Ok(self.forward(x, mode))
    }

    /// Probability that `surface` comes from the data.
    pub fn discriminate(&mut self, surface: &SurfaceState) -> Result<f64> {
        let t = surface.to_tensor().cast::<T>();
        let t = t.reshape(&[1, 3, surface.rows(), surface.cols()])?;
        let z = self.forward_logits(&t, Mode::Eval)?;
        Ok(sigmoid(z.data()[0].f64()))
    }
}

impl<T: Scalar> Module<T> for Discriminator<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let f = self.features.forward(x, mode);
        self.head.forward(&f, mode)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let g = self.head.backward(grad);
        self.features.backward(&g)
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        self.features.visit(&join(prefix, "features"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.features.visit_mut(&join(prefix, "features"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

impl Discriminator<f32> {
    pub fn checkpoint(&self) -> Checkpoint {
        let value = serde_json::to_value(&self.config).expect("config serializes");
        Checkpoint::from_module(CHECKPOINT_KIND, value, &config_hash(&self.config), self)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != CHECKPOINT_KIND {
            return Err(CoreError::Config(format!("checkpoint holds a '{}', not a {CHECKPOINT_KIND}", ckpt.kind)));
        }
        let config: DiscriminatorConfig = serde_json::from_value(ckpt.config.clone())
            .map_err(|e| CoreError::Config(format!("discriminator config in checkpoint: {e}")))?;
        let mut d = Self::new(&config)?;
        ckpt.load_into(&mut d)?;
        Ok(d)
    }
}
