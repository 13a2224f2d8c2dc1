use crate::im2col::Window;
use crate::module::{Mode, Module, Param};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Max pooling; padded cells never win. Windows may overlap.
pub struct MaxPool2d<T: Scalar> {
    win: Window,
    argmax: Vec<usize>,
    in_shape: Vec<usize>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> MaxPool2d<T> {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        assert!(padding < kernel, "pool padding must be smaller than the kernel");
        Self { win: Window::new(kernel, stride, padding), argmax: Vec::new(), in_shape: Vec::new(), _marker: Default::default() }
    }

    pub fn window(&self) -> Window {
        self.win
    }
}

impl<T: Scalar> Module<T> for MaxPool2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Tensor<T> {
        let (n, c, h, w) = x.dims4();
        let oh = self.win.out_len(h).expect("pool input too small");
        let ow = self.win.out_len(w).expect("pool input too small");
        let (k, s, p) = (self.win.kernel as isize, self.win.stride as isize, self.win.padding as isize);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        self.argmax = vec![0; n * c * oh * ow];
        let xd = x.data();
        let od = out.data_mut();
        for nc in 0..n * c {
            let base = nc * h * w;
            for oy in 0..oh {
                let y0 = oy as isize * s - p;
                for ox in 0..ow {
                    let x0 = ox as isize * s - p;
                    let mut best = T::neg_infinity();
                    let mut best_i = usize::MAX;
                    for dy in 0..k {
                        let iy = y0 + dy;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for dx in 0..k {
                            let ix = x0 + dx;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = base + iy as usize * w + ix as usize;
                            let v = xd[idx];
                            // First maximum wins; NaN propagates.
                            if v > best || best_i == usize::MAX || v.is_nan() {
                                best = v;
                                best_i = idx;
                            }
                        }
                    }
                    let o = (nc * oh + oy) * ow + ox;
                    od[o] = best;
                    self.argmax[o] = best_i;
                }
            }
        }
        self.in_shape = x.shape().to_vec();
        out
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let mut dx = Tensor::zeros(&self.in_shape);
        let d = dx.data_mut();
        for (&g, &i) in grad.data().iter().zip(&self.argmax) {
            d[i] += g;
        }
        dx
    }

    fn visit(&self, _: &str, _: &mut dyn FnMut(&str, &Param<T>)) {}
    fn visit_mut(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Param<T>)) {}
}
