use crate::module::{Module, Param};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction and no weight decay.
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update to every trainable parameter of `module` from its
    /// accumulated gradients. Gradients are left in place.
    pub fn step<M: Module<T> + ?Sized>(&mut self, module: &mut M) {
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (ob1, ob2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let lr = T::of(c.lr);
        let (bc1, bc2, eps) = (T::of(bc1), T::of(bc2), T::of(c.eps));
        let first = &mut self.first;
        let second = &mut self.second;
        let mut idx = 0;
        module.visit_mut("", &mut |_, p: &mut Param<T>| {
            if !p.is_trainable() {
                return;
            }
            if first.len() <= idx {
                first.push(vec![T::zero(); p.value.len()]);
                second.push(vec![T::zero(); p.value.len()]);
            }
            let m = &mut first[idx];
            let v = &mut second[idx];
            assert_eq!(m.len(), p.value.len(), "optimizer state does not match module");
            let grads = p.grad.data();
            for (((w, &g), mi), vi) in p.value.data_mut().iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + ob1 * g;
                *vi = b2 * *vi + ob2 * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
            idx += 1;
        });
    }
}
