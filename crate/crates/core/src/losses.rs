//! Objective terms on batches of surfaces laid out as `[B, 3, H, W]`.
//!
//! Per-state terms sum absolute differences over every grid entry and the
//! batch reduction divides by the number of states.

use ismo_nn::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

fn check_same(a: &[usize], b: &[usize], what: &str) -> Result<()> {
    if a != b {
        return Err(CoreError::Shape(format!("{what}: shapes {a:?} and {b:?} differ")));
    }
    Ok(())
}

fn batch_of<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<usize> {
    match t.shape() {
        [b, _, _, _] if *b > 0 => Ok(*b),
        s => Err(CoreError::Shape(format!("{what}: expected a non-empty [B,C,H,W] batch, got {s:?}"))),
    }
}

#[inline]
fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

pub fn loss_3d<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<T> {
    Ok(loss_3d_grad(pred, gt)?.0)
}

/// Value and gradient with respect to `pred`.
pub fn loss_3d_grad<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    check_same(pred.shape(), gt.shape(), "loss_3d")?;
    let b = T::of(batch_of(pred, "loss_3d")? as f64);
    let mut sum = T::zero();
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(gt.data()) {
        sum += (p - t).abs();
        *g = sign(p - t) / b;
    }
    Ok((sum / b, grad))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    Replicate,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IsometryConfig {
    /// Standard deviation in grid units; 0 gives the identity kernel.
    pub sigma: f64,
    pub kernel_size: usize,
    pub padding: Padding,
    /// Treat the smoothed surface as a constant target when differentiating.
    pub detach: bool,
}

impl Default for IsometryConfig {
    fn default() -> Self {
        Self { sigma: 1.0, kernel_size: 5, padding: Padding::Replicate, detach: false }
    }
}

impl IsometryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_size < 3 || self.kernel_size % 2 == 0 {
            return Err(CoreError::Argument(format!("kernel_size={} must be odd and >= 3", self.kernel_size)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(CoreError::Argument(format!("sigma={} must be finite and >= 0", self.sigma)));
        }
        Ok(())
    }

    /// Normalized 1-D taps; the 2-D kernel is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let r = (self.kernel_size / 2) as i64;
        if self.sigma == 0.0 {
            return (-r..=r).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        }
        let raw: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * self.sigma * self.sigma)).exp()).collect();
        let sum: f64 = raw.iter().sum();
        raw.iter().map(|v| v / sum).collect()
    }

    /// Full 2-D kernel, row-major `kernel_size x kernel_size`.
    pub fn kernel_2d(&self) -> Vec<f64> {
        let t = self.taps();
        t.iter().flat_map(|a| t.iter().map(move |b| a * b)).collect()
    }
}

/// Source index of tap offset `d` at position `i`, or `None` for a zero pad.
#[inline]
fn tap_index(i: usize, d: i64, len: usize, pad: Padding) -> Option<usize> {
    let j = i as i64 + d;
    if (0..len as i64).contains(&j) {
        Some(j as usize)
    } else {
        match pad {
            Padding::Replicate => Some(j.clamp(0, len as i64 - 1) as usize),
            Padding::Zero => None,
        }
    }
}

/// One separable pass along rows (`horizontal`) or columns, optionally transposed.
fn pass<T: Scalar>(src: &[T], h: usize, w: usize, taps: &[T], pad: Padding, horizontal: bool, transpose: bool, dst: &mut [T]) {
    let r = (taps.len() / 2) as i64;
    dst.iter_mut().for_each(|v| *v = T::zero());
    for y in 0..h {
        for x in 0..w {
            let here = y * w + x;
            for (k, &t) in taps.iter().enumerate() {
                let d = k as i64 - r;
                let other = if horizontal {
                    tap_index(x, d, w, pad).map(|xx| y * w + xx)
                } else {
                    tap_index(y, d, h, pad).map(|yy| yy * w + x)
                };
                let Some(o) = other else { continue };
                if transpose {
                    dst[o] += t * src[here];
                } else {
                    dst[here] += t * src[o];
                }
            }
        }
    }
}

fn smooth_impl<T: Scalar>(x: &Tensor<T>, cfg: &IsometryConfig, transpose: bool) -> Result<Tensor<T>> {
    cfg.validate()?;
    let (n, c, h, w) = match x.shape() {
        [n, c, h, w] => (*n, *c, *h, *w),
        s => return Err(CoreError::Shape(format!("smoothing expects [B,C,H,W], got {s:?}"))),
    };
    let taps: Vec<T> = cfg.taps().into_iter().map(T::of).collect();
    let plane = h * w;
    let mut out = Tensor::zeros(x.shape());
    let mut tmp = vec![T::zero(); plane];
    for p in 0..n * c {
        let src = &x.data()[p * plane..(p + 1) * plane];
        let dst = &mut out.data_mut()[p * plane..(p + 1) * plane];
        // S = V * H, so S^T = H^T * V^T
        if transpose {
            pass(src, h, w, &taps, cfg.padding, false, true, &mut tmp);
            pass(&tmp, h, w, &taps, cfg.padding, true, true, dst);
        } else {
            pass(src, h, w, &taps, cfg.padding, true, false, &mut tmp);
            pass(&tmp, h, w, &taps, cfg.padding, false, false, dst);
        }
    }
    Ok(out)
}

/// Per-channel Gaussian smoothing of a surface batch.
pub fn smooth_batch<T: Scalar>(x: &Tensor<T>, cfg: &IsometryConfig) -> Result<Tensor<T>> {
    smooth_impl(x, cfg, false)
}

/// Adjoint of [`smooth_batch`].
pub fn smooth_batch_transpose<T: Scalar>(x: &Tensor<T>, cfg: &IsometryConfig) -> Result<Tensor<T>> {
    smooth_impl(x, cfg, true)
}

pub fn smooth_surface(
    surface: &crate::geometry::SurfaceState,
    cfg: &IsometryConfig,
) -> Result<crate::geometry::SurfaceState> {
    let t = surface.to_tensor().cast::<f64>();
    let t = t.reshape(&[1, 3, surface.rows(), surface.cols()])?;
    let s = smooth_batch(&t, cfg)?;
    crate::geometry::SurfaceState::from_tensor(surface.state_id, &s)
}

pub fn loss_iso<T: Scalar>(pred: &Tensor<T>, cfg: &IsometryConfig) -> Result<T> {
    Ok(loss_iso_grad(pred, cfg)?.0)
}

pub fn loss_iso_grad<T: Scalar>(pred: &Tensor<T>, cfg: &IsometryConfig) -> Result<(T, Tensor<T>)> {
    let b = T::of(batch_of(pred, "loss_iso")? as f64);
    let smoothed = smooth_batch(pred, cfg)?;
    let mut sum = T::zero();
    let mut r = Tensor::zeros(pred.shape());
    for ((g, &p), &s) in r.data_mut().iter_mut().zip(pred.data()).zip(smoothed.data()) {
        sum += (p - s).abs();
        *g = sign(p - s) / b;
    }
    if cfg.detach {
        return Ok((sum / b, r));
    }
    let back = smooth_batch_transpose(&r, cfg)?;
    let mut grad = r;
    for (g, &bk) in grad.data_mut().iter_mut().zip(back.data()) {
        *g -= bk;
    }
    Ok((sum / b, grad))
}

fn clamp_prob(p: f64) -> f64 {
    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
        log::warn!("probability {p} clamped to [{BCE_EPS}, {}]", 1.0 - BCE_EPS);
    }
    p.clamp(BCE_EPS, 1.0 - BCE_EPS)
}

fn nonempty(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(CoreError::Argument(format!("{what}: empty batch")));
    }
    if let Some(p) = v.iter().find(|p| p.is_nan()) {
        return Err(CoreError::numeric(what, format!("probability {p}")));
    }
    Ok(())
}

/// Generator term: mean of `-log D(fake)`.
pub fn loss_adv_generator(d_on_fake: &[f64]) -> Result<f64> {
    nonempty(d_on_fake, "loss_adv_generator")?;
    Ok(-d_on_fake.iter().map(|&p| clamp_prob(p).ln()).sum::<f64>() / d_on_fake.len() as f64)
}

/// Discriminator term: `-mean log D(real) - mean log(1 - D(fake))`.
pub fn loss_adv_discriminator(d_on_real: &[f64], d_on_fake: &[f64]) -> Result<f64> {
    nonempty(d_on_real, "loss_adv_discriminator")?;
    nonempty(d_on_fake, "loss_adv_discriminator")?;
    let real = -d_on_real.iter().map(|&p| clamp_prob(p).ln()).sum::<f64>() / d_on_real.len() as f64;
    let fake = -d_on_fake.iter().map(|&p| (1.0 - clamp_prob(p)).ln()).sum::<f64>() / d_on_fake.len() as f64;
    Ok(real + fake)
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// [`loss_adv_generator`] evaluated from logits, with its gradient.
pub fn generator_bce_logits(logits: &[f64]) -> (f64, Vec<f64>) {
    let n = logits.len() as f64;
    let value = logits.iter().map(|&z| softplus(-z)).sum::<f64>() / n;
    let grad = logits.iter().map(|&z| (ismo_nn::layers::sigmoid(z) - 1.0) / n).collect();
    (value, grad)
}

/// [`loss_adv_discriminator`] evaluated from logits, with gradients for the
/// real and fake logits.
pub fn discriminator_bce_logits(real: &[f64], fake: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let (nr, nf) = (real.len() as f64, fake.len() as f64);
    let value = real.iter().map(|&z| softplus(-z)).sum::<f64>() / nr + fake.iter().map(|&z| softplus(z)).sum::<f64>() / nf;
    let gr = real.iter().map(|&z| (ismo_nn::layers::sigmoid(z) - 1.0) / nr).collect();
    let gf = fake.iter().map(|&z| ismo_nn::layers::sigmoid(z) / nf).collect();
    (value, gr, gf)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l3d: f64,
    pub liso: f64,
    pub lg: f64,
    pub ld: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(l3d: f64, liso: f64, lg: f64, ld: f64) -> Result<Self> {
        let mut b = Self { l3d, liso, lg, ld, total: 0.0 };
        b.total = loss_total(&b)?;
        Ok(b)
    }
}

/// Unweighted sum of the four components.
pub fn loss_total(c: &LossBreakdown) -> Result<f64> {
    for (name, v) in [("l3d", c.l3d), ("liso", c.liso), ("lg", c.lg), ("ld", c.ld)] {
        if !v.is_finite() {
            return Err(CoreError::numeric("loss_total", format!("component {name} is {v}")));
        }
    }
    Ok(c.l3d + c.liso + c.lg + c.ld)
}
