use crate::module::{Mode, Module, Param};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Bilinear ×2 upsampling with half-pixel centers (no corner alignment).
pub struct UpsampleBilinear2x<T: Scalar> {
    in_shape: Vec<usize>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Default for UpsampleBilinear2x<T> {
    fn default() -> Self {
        Self { in_shape: Vec::new(), _marker: Default::default() }
    }
}

impl<T: Scalar> UpsampleBilinear2x<T> {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Source taps `(i0, i1, frac)` for each of the `2·len` output positions.
fn taps(len: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * len)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

impl<T: Scalar> Module<T> for UpsampleBilinear2x<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Tensor<T> {
        let (n, c, h, w) = x.dims4();
        let (ty, tx) = (taps(h), taps(w));
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let xd = x.data();
        let od = out.data_mut();
        for nc in 0..n * c {
            let src = &xd[nc * h * w..(nc + 1) * h * w];
            let dst = &mut od[nc * oh * ow..(nc + 1) * oh * ow];
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let (fy1, fy0) = (T::of(fy), T::of(1.0 - fy));
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let (fx1, fx0) = (T::of(fx), T::of(1.0 - fx));
                    dst[oy * ow + ox] = fy0 * (fx0 * src[y0 * w + x0] + fx1 * src[y0 * w + x1])
                        + fy1 * (fx0 * src[y1 * w + x0] + fx1 * src[y1 * w + x1]);
                }
            }
        }
        self.in_shape = x.shape().to_vec();
        out
    }

    fn backward(&mut self, grad: &Tensor<T>) -> Tensor<T> {
        let (n, c, h, w) = (self.in_shape[0], self.in_shape[1], self.in_shape[2], self.in_shape[3]);
        let (ty, tx) = (taps(h), taps(w));
        let (oh, ow) = (2 * h, 2 * w);
        let mut dx = Tensor::zeros(&self.in_shape);
        let gd = grad.data();
        let dd = dx.data_mut();
        for nc in 0..n * c {
            let g = &gd[nc * oh * ow..(nc + 1) * oh * ow];
            let d = &mut dd[nc * h * w..(nc + 1) * h * w];
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let (fy1, fy0) = (T::of(fy), T::of(1.0 - fy));
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let (fx1, fx0) = (T::of(fx), T::of(1.0 - fx));
                    let v = g[oy * ow + ox];
                    d[y0 * w + x0] += fy0 * fx0 * v;
                    d[y0 * w + x1] += fy0 * fx1 * v;
                    d[y1 * w + x0] += fy1 * fx0 * v;
                    d[y1 * w + x1] += fy1 * fx1 * v;
                }
            }
        }
        dx
    }

    fn visit(&self, _: &str, _: &mut dyn FnMut(&str, &Param<T>)) {}
    fn visit_mut(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Param<T>)) {}
}
