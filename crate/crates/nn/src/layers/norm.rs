use crate::module::{join, Mode, Module, Param};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-channel batch normalization over `(n, h, w)`.
pub struct BatchNorm2d<T: Scalar> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    momentum: f64,
    eps: f64,
    cache: Option<Cache<T>>,
}

struct Cache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    batch_stats: bool,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::trainable(Tensor::full(&[channels], T::one())),
            beta: Param::trainable(Tensor::zeros(&[channels])),
            running_mean: Param::buffer(Tensor::zeros(&[channels])),
            running_var: Param::buffer(Tensor::full(&[channels], T::one())),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }
}

impl<T: Scalar> Module<T> for BatchNorm2d<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.channels(), "batchnorm channel mismatch");
        let plane = h * w;
        let count = n * plane;
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        if mode.uses_batch_stats() {
            for i in 0..n {
                let s = x.sample(i);
                for ch in 0..c {
                    mean[ch] += s[ch * plane..(ch + 1) * plane].iter().map(|v| v.f64()).sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= count as f64);
            for i in 0..n {
                let s = x.sample(i);
                for ch in 0..c {
                    let m = mean[ch];
                    var[ch] += s[ch * plane..(ch + 1) * plane].iter().map(|v| (v.f64() - m).powi(2)).sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= count as f64);
            if mode == Mode::Train {
                let unbias = if count > 1 { count as f64 / (count as f64 - 1.0) } else { 1.0 };
                let mom = self.momentum;
                for ch in 0..c {
                    let rm = &mut self.running_mean.value.data_mut()[ch];
                    *rm = T::of((1.0 - mom) * rm.f64() + mom * mean[ch]);
                    let rv = &mut self.running_var.value.data_mut()[ch];
                    *rv = T::of((1.0 - mom) * rv.f64() + mom * var[ch] * unbias);
                }
            }
        } else {
            for ch in 0..c {
                mean[ch] = self.running_mean.value.data()[ch].f64();
                var[ch] = self.running_var.value.data()[ch].f64();
            }
        }
        let inv_std: Vec<T> = var.iter().map(|v| T::of(1.0 / (v + self.eps).sqrt())).collect();
        let mut xhat = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        for i in 0..n {
            let s = x.sample(i);
            let xs = xhat.sample_mut(i);
            for ch in 0..c {
                let m = T::of(mean[ch]);
                let r = ch * plane..(ch + 1) * plane;
                for (d, &v) in xs[r.clone()].iter_mut().zip(&s[r]) {
                    *d = (v - m) * inv_std[ch];
                }
            }
            let os = out.sample_mut(i);
            for ch in 0..c {
                let r = ch * plane..(ch + 1) * plane;
                for (o, &v) in os[r.clone()].iter_mut().zip(&xs[r]) {
                    *o = gamma[ch] * v + beta[ch];
                }
            }
        }
        self.cache = Some(Cache { xhat, inv_std, batch_stats: mode.uses_batch_stats() });
        out
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let Cache { xhat, inv_std, batch_stats } = self.cache.take().expect("backward before forward");
        let (n, c, h, w) = xhat.dims4();
        let plane = h * w;
        let count = T::of((n * plane) as f64);
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xhat = vec![T::zero(); c];
        for i in 0..n {
            let g = grad.sample(i);
            let xs = xhat.sample(i);
            for ch in 0..c {
                let r = ch * plane..(ch + 1) * plane;
                for (&gv, &xv) in g[r.clone()].iter().zip(&xs[r]) {
                    sum_dy[ch] += gv;
                    sum_dy_xhat[ch] += gv * xv;
                }
            }
        }
        for ch in 0..c {
            self.gamma.grad.data_mut()[ch] += sum_dy_xhat[ch];
            self.beta.grad.data_mut()[ch] += sum_dy[ch];
        }
        let gamma = self.gamma.value.data();
        let mut dx = Tensor::zeros(grad.shape());
        for i in 0..n {
            let g = grad.sample(i);
            let xs = xhat.sample(i);
            let d = dx.sample_mut(i);
            for ch in 0..c {
                let scale = gamma[ch] * inv_std[ch];
                let r = ch * plane..(ch + 1) * plane;
                if batch_stats {
                    let mdy = sum_dy[ch] / count;
                    let mdyx = sum_dy_xhat[ch] / count;
                    for ((dv, &gv), &xv) in d[r.clone()].iter_mut().zip(&g[r.clone()]).zip(&xs[r]) {
                        *dv = scale * (gv - mdy - xv * mdyx);
                    }
                } else {
                    for (dv, &gv) in d[r.clone()].iter_mut().zip(&g[r]) {
                        *dv = scale * gv;
                    }
                }
            }
        }
        dx
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}
