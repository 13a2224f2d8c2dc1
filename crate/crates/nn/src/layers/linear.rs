use rand::Rng;

use crate::init::scaled_normal;
use crate::module::{join, Mode, Module, Param};
use crate::scalar::{gemm, Scalar};
use crate::tensor::Tensor;

/// Fully connected layer over the flattened trailing dimensions.
/// Input `[n, ...]` with `in_features` trailing elements; output `[n, out]`.
pub struct Linear<T: Scalar> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_features: usize,
    out_features: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, gain: f64, rng: &mut R) -> Self {
        Self {
            weight: Param::trainable(scaled_normal(&[out_features, in_features], in_features, gain, rng)),
            bias: Param::trainable(Tensor::zeros(&[out_features])),
            in_features,
            out_features,
            input: None,
        }
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Tensor<T> {
        let n = x.shape()[0];
        assert_eq!(x.len(), n * self.in_features, "linear expects {} features per sample", self.in_features);
        let mut out = Tensor::zeros(&[n, self.out_features]);
        gemm(false, true, n, self.out_features, self.in_features, T::one(), x.data(), self.weight.value.data(), T::zero(), out.data_mut());
        for i in 0..n {
            for (o, &b) in out.sample_mut(i).iter_mut().zip(self.bias.value.data()) {
                *o += b;
            }
        }
        self.input = Some(x.clone());
        out
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("backward before forward");
        let n = x.shape()[0];
        gemm(true, false, self.out_features, self.in_features, n, T::one(), grad.data(), x.data(), T::one(), self.weight.grad.data_mut());
        for i in 0..n {
            for (b, &g) in self.bias.grad.data_mut().iter_mut().zip(grad.sample(i)) {
                *b += g;
            }
        }
        let mut dx = Tensor::zeros(x.shape());
        gemm(false, false, n, self.in_features, self.out_features, T::one(), grad.data(), self.weight.value.data(), T::zero(), dx.data_mut());
        dx
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
