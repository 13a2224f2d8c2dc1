use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Zero-mean normal initialization scaled by `gain / sqrt(fan_in)`.
pub fn scaled_normal<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, gain: f64, rng: &mut R) -> Tensor<T> {
    let std = gain / (fan_in.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::of(normal.sample(rng))).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// Gain for leaky rectifiers with the given negative slope.
pub fn leaky_gain(slope: f64) -> f64 {
    (2.0 / (1.0 + slope * slope)).sqrt()
}
