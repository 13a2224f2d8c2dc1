use crate::module::{Mode, Module, Param};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `max(x, slope·x)`; slope 0 gives a plain rectifier.
pub struct LeakyRelu<T: Scalar> {
    slope: T,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> LeakyRelu<T> {
    pub fn new(slope: f64) -> Self {
        Self { slope: T::of(slope), input: None }
    }

    pub fn relu() -> Self {
        Self::new(0.0)
    }
}

impl<T: Scalar> Module<T> for LeakyRelu<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Tensor<T> {
        let s = self.slope;
        let out = x.map(|v| if v > T::zero() { v } else { v * s });
        self.input = Some(x.clone());
        out
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("backward before forward");
        let mut dx = grad.clone();
        for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
            if v <= T::zero() {
                *d *= self.slope;
            }
        }
        dx
    }

    fn visit(&self, _: &str, _: &mut dyn FnMut(&str, &Param<T>)) {}
    fn visit_mut(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Param<T>)) {}
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub struct Sigmoid<T: Scalar> {
    output: Option<Tensor<T>>,
}

impl<T: Scalar> Default for Sigmoid<T> {
    fn default() -> Self {
        Self { output: None }
    }
}

impl<T: Scalar> Sigmoid<T> {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Module<T> for Sigmoid<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Tensor<T> {
        let out = x.map(sigmoid);
        self.output = Some(out.clone());
        out
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let y = self.output.take().expect("backward before forward");
        let mut dx = grad.clone();
        for (d, &v) in dx.data_mut().iter_mut().zip(y.data()) {
            *d *= v * (T::one() - v);
        }
        dx
    }

    fn visit(&self, _: &str, _: &mut dyn FnMut(&str, &Param<T>)) {}
    fn visit_mut(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Param<T>)) {}
}
