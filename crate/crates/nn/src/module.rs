use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// How batch-dependent layers behave during a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running statistics updated.
    Train,
    /// Batch statistics, running statistics left untouched. Used when a
    /// network must stay bit-identical while gradients flow through it.
    Frozen,
    /// Running statistics.
    Eval,
}

impl Mode {
    pub fn uses_batch_stats(self) -> bool {
        !matches!(self, Mode::Eval)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Trainable,
    /// Persistent state that is saved but never optimized (running stats).
    Buffer,
}

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub kind: ParamKind,
}

impl<T: Scalar> Param<T> {
    pub fn trainable(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad, kind: ParamKind::Trainable }
    }

    pub fn buffer(value: Tensor<T>) -> Self {
        Self { value, grad: Tensor::empty(), kind: ParamKind::Buffer }
    }

    pub fn is_trainable(&self) -> bool {
        self.kind == ParamKind::Trainable
    }

    pub fn zero_grad(&mut self) {
        if self.is_trainable() {
            self.grad.fill(T::zero());
        }
    }
}

/// A differentiable layer or network with an explicit backward pass.
///
/// `forward` caches what `backward` needs; `backward` must be called at most
/// once per `forward`, receives dL/d(output), accumulates parameter
/// gradients and returns dL/d(input).
pub trait Module<T: Scalar> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T>;

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T>;

    /// Visit every parameter and buffer in a stable order.
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>));

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>));
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Convenience queries over any [`Module`].
pub trait ModuleExt<T: Scalar>: Module<T> {
    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.zero_grad());
    }

    fn num_trainable(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| {
            if p.is_trainable() {
                n += p.value.len();
            }
        });
        n
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit("", &mut |name, _| names.push(name.to_string()));
        names
    }

    /// Flattened copy of every trainable value, in visit order.
    fn flat_values(&self) -> Vec<T> {
        let mut out = Vec::new();
        self.visit("", &mut |_, p| {
            if p.is_trainable() {
                out.extend_from_slice(p.value.data());
            }
        });
        out
    }

    fn flat_grads(&self) -> Vec<T> {
        let mut out = Vec::new();
        self.visit("", &mut |_, p| {
            if p.is_trainable() {
                out.extend_from_slice(p.grad.data());
            }
        });
        out
    }

    /// Read or write a single trainable scalar addressed by its flat index.
    fn with_flat_value(&mut self, index: usize, f: &mut dyn FnMut(&mut T)) {
        let mut offset = 0;
        let mut done = false;
        self.visit_mut("", &mut |_, p| {
            if done || !p.is_trainable() {
                return;
            }
            let len = p.value.len();
            if index < offset + len {
                f(&mut p.value.data_mut()[index - offset]);
                done = true;
            }
            offset += len;
        });
        assert!(done, "flat parameter index {index} out of range");
    }

    fn set_flat_value(&mut self, index: usize, v: T) {
        self.with_flat_value(index, &mut |x| *x = v);
    }

    fn flat_value(&mut self, index: usize) -> T {
        let mut out = T::zero();
        self.with_flat_value(index, &mut |x| out = *x);
        out
    }

    /// Copy values (trainable and buffers) from another instance of the same
    /// architecture, possibly in another precision.
    fn copy_values_from<U: Scalar, M: Module<U> + ?Sized>(&mut self, other: &M) {
        let mut src: Vec<(String, Tensor<U>)> = Vec::new();
        other.visit("", &mut |name, p| src.push((name.to_string(), p.value.clone())));
        let mut i = 0;
        self.visit_mut("", &mut |name, p| {
            let (ref sname, ref v) = src[i];
            assert_eq!(name, sname, "architecture mismatch");
            assert_eq!(p.value.shape(), v.shape(), "shape mismatch for {name}");
            p.value = v.cast();
            i += 1;
        });
    }
}

impl<T: Scalar, M: Module<T> + ?Sized> ModuleExt<T> for M {}

/// Layers applied one after another.
pub struct Sequential<T: Scalar> {
    layers: Vec<(String, Box<dyn Module<T> + Send>)>,
}

impl<T: Scalar> Default for Sequential<T> {
    fn default() -> Self {
        Self { layers: Vec::new() }
    }
}

impl<T: Scalar> Sequential<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, name: &str, layer: impl Module<T> + Send + 'static) -> Self {
        self.layers.push((name.to_string(), Box::new(layer)));
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

impl<T: Scalar> Module<T> for Sequential<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let mut iter = self.layers.iter_mut();
        let Some((_, first)) = iter.next() else {
            return x.clone();
        };
        let mut h = first.forward(x, mode);
        for (_, layer) in iter {
            h = layer.forward(&h, mode);
        }
        h
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let mut iter = self.layers.iter_mut().rev();
        let Some((_, last)) = iter.next() else {
            return grad.clone();
        };
        let mut g = last.backward(grad);
        for (_, layer) in iter {
            g = layer.backward(&g);
        }
        g
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (name, layer) in &self.layers {
            layer.visit(&join(prefix, name), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (name, layer) in &mut self.layers {
            layer.visit_mut(&join(prefix, name), f);
        }
    }
}
