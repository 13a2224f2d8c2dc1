use rand::Rng;

use crate::im2col::{col2im, im2col, Window};
use crate::init::scaled_normal;
use crate::module::{join, Mode, Module, Param};
use crate::scalar::{gemm, Scalar};
use crate::tensor::Tensor;

/// 2-D convolution, weight layout `[out, in, k, k]`.
pub struct Conv2d<T: Scalar> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    in_ch: usize,
    out_ch: usize,
    win: Window,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let weight = Param::trainable(scaled_normal(&[out_ch, in_ch, kernel, kernel], fan_in, gain, rng));
        let bias = bias.then(|| Param::trainable(Tensor::zeros(&[out_ch])));
        Self { weight, bias, in_ch, out_ch, win: Window::new(kernel, stride, padding), input: None }
    }

    pub fn param_count(in_ch: usize, out_ch: usize, kernel: usize, bias: bool) -> usize {
        in_ch * out_ch * kernel * kernel + if bias { out_ch } else { 0 }
    }

    pub fn window(&self) -> Window {
        self.win
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        Some((self.win.out_len(h)?, self.win.out_len(w)?))
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Tensor<T> {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.in_ch, "conv2d expects {} input channels, got {}", self.in_ch, c);
        let (oh, ow) = self.out_hw(h, w).expect("input smaller than kernel");
        let kk = c * self.win.kernel * self.win.kernel;
        let plane = oh * ow;
        let mut out = Tensor::zeros(&[n, self.out_ch, oh, ow]);
        let mut col = vec![T::zero(); kk * plane];
        for i in 0..n {
            im2col(x.sample(i), c, h, w, self.win, oh, ow, &mut col);
            let dst = out.sample_mut(i);
            gemm(false, false, self.out_ch, plane, kk, T::one(), self.weight.value.data(), &col, T::zero(), dst);
            if let Some(b) = &self.bias {
                for (o, &bv) in b.value.data().iter().enumerate() {
                    dst[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        self.input = Some(x.clone());
        out
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("backward before forward");
        let (n, c, h, w) = x.dims4();
        let (_, _, oh, ow) = grad.dims4();
        let kk = c * self.win.kernel * self.win.kernel;
        let plane = oh * ow;
        let mut dx = Tensor::zeros(x.shape());
        let mut col = vec![T::zero(); kk * plane];
        let mut dcol = vec![T::zero(); kk * plane];
        for i in 0..n {
            let g = grad.sample(i);
            im2col(x.sample(i), c, h, w, self.win, oh, ow, &mut col);
            gemm(false, true, self.out_ch, kk, plane, T::one(), g, &col, T::one(), self.weight.grad.data_mut());
            gemm(true, false, kk, plane, self.out_ch, T::one(), self.weight.value.data(), g, T::zero(), &mut dcol);
            col2im(&dcol, c, h, w, self.win, oh, ow, dx.sample_mut(i));
            if let Some(b) = &mut self.bias {
                for (o, bg) in b.grad.data_mut().iter_mut().enumerate() {
                    *bg += g[o * plane..(o + 1) * plane].iter().copied().sum::<T>();
                }
            }
        }
        dx
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

/// Transposed 2-D convolution, weight layout `[in, out, k, k]`.
///
/// Output size is `(in - 1) * stride - 2 * padding + kernel`.
pub struct ConvTranspose2d<T: Scalar> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    in_ch: usize,
    out_ch: usize,
    win: Window,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        // Each output pixel receives roughly in·k²/s² contributions.
        let fan_in = (in_ch * kernel * kernel / (stride * stride)).max(1);
        let weight = Param::trainable(scaled_normal(&[in_ch, out_ch, kernel, kernel], fan_in, gain, rng));
        let bias = bias.then(|| Param::trainable(Tensor::zeros(&[out_ch])));
        Self { weight, bias, in_ch, out_ch, win: Window::new(kernel, stride, padding), input: None }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        Some((self.win.transposed_out_len(h)?, self.win.transposed_out_len(w)?))
    }
}

impl<T: Scalar> Module<T> for ConvTranspose2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Tensor<T> {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.in_ch, "conv_transpose2d expects {} input channels, got {}", self.in_ch, c);
        let (oh, ow) = self.out_hw(h, w).expect("transposed conv output would be empty");
        let kk = self.out_ch * self.win.kernel * self.win.kernel;
        let plane = h * w;
        let mut out = Tensor::zeros(&[n, self.out_ch, oh, ow]);
        let mut col = vec![T::zero(); kk * plane];
        for i in 0..n {
            gemm(true, false, kk, plane, c, T::one(), self.weight.value.data(), x.sample(i), T::zero(), &mut col);
            let dst = out.sample_mut(i);
            col2im(&col, self.out_ch, oh, ow, self.win, h, w, dst);
            if let Some(b) = &self.bias {
                let op = oh * ow;
                for (o, &bv) in b.value.data().iter().enumerate() {
                    dst[o * op..(o + 1) * op].iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        self.input = Some(x.clone());
        out
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("backward before forward");
        let (n, c, h, w) = x.dims4();
        let (_, _, oh, ow) = grad.dims4();
        let kk = self.out_ch * self.win.kernel * self.win.kernel;
        let plane = h * w;
        let mut dx = Tensor::zeros(x.shape());
        let mut gcol = vec![T::zero(); kk * plane];
        for i in 0..n {
            let g = grad.sample(i);
            im2col(g, self.out_ch, oh, ow, self.win, h, w, &mut gcol);
            gemm(false, false, c, plane, kk, T::one(), self.weight.value.data(), &gcol, T::zero(), dx.sample_mut(i));
            gemm(false, true, c, kk, plane, T::one(), x.sample(i), &gcol, T::one(), self.weight.grad.data_mut());
            if let Some(b) = &mut self.bias {
                let op = oh * ow;
                for (o, bg) in b.grad.data_mut().iter_mut().enumerate() {
                    *bg += g[o * op..(o + 1) * op].iter().copied().sum::<T>();
                }
            }
        }
        dx
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}
