//! Patch unfolding used by the convolution layers.

use crate::scalar::Scalar;

/// Geometry of a square-kernel sliding window over a `h × w` plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Window {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        assert!(kernel >= 1 && stride >= 1, "kernel and stride must be positive");
        Self { kernel, stride, padding }
    }

    /// Number of window positions along an axis of length `len`, or `None`
    /// when the padded input is smaller than the kernel.
    pub fn out_len(&self, len: usize) -> Option<usize> {
        let padded = len + 2 * self.padding;
        if padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    /// Output length of the transposed operation.
    pub fn transposed_out_len(&self, len: usize) -> Option<usize> {
        ((len - 1) * self.stride + self.kernel).checked_sub(2 * self.padding)
    }
}

/// Output columns `lo..hi` whose stride-1 tap at kernel column `kj` lands
/// inside a row of width `w`.
fn valid_range(kj: usize, pad: usize, w: usize, ow: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kj).min(ow);
    let hi = (w + pad).saturating_sub(kj).min(ow).max(lo);
    (lo, hi)
}

/// Unfold `input` (`c × h × w`) into `col` (`c·k·k × oh·ow`).
pub fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize, win: Window, oh: usize, ow: usize, col: &mut [T]) {
    let k = win.kernel;
    let p = win.padding as isize;
    let s = win.stride as isize;
    debug_assert_eq!(col.len(), c * k * k * oh * ow);
    let plane = oh * ow;
    for ch in 0..c {
        let src = &input[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let dst = &mut col[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = oy as isize * s - p + ki as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let srow = &src[iy as usize * w..(iy as usize + 1) * w];
                    if s == 1 {
                        let (lo, hi) = valid_range(kj, win.padding, w, ow);
                        line[..lo].fill(T::zero());
                        line[hi..].fill(T::zero());
                        if lo < hi {
                            let start = lo + kj - win.padding;
                            line[lo..hi].copy_from_slice(&srow[start..start + hi - lo]);
                        }
                    } else {
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = ox as isize * s - p + kj as isize;
                            *v = if ix >= 0 && ix < w as isize { srow[ix as usize] } else { T::zero() };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add `col` back into `out` (`c × h × w`).
/// `out` is accumulated into, not overwritten.
pub fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize, win: Window, oh: usize, ow: usize, out: &mut [T]) {
    let k = win.kernel;
    let p = win.padding as isize;
    let s = win.stride as isize;
    debug_assert_eq!(col.len(), c * k * k * oh * ow);
    let plane = oh * ow;
    for ch in 0..c {
        let dst = &mut out[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let src = &col[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = oy as isize * s - p + ki as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let drow = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                    let line = &src[oy * ow..(oy + 1) * ow];
                    if s == 1 {
                        let (lo, hi) = valid_range(kj, win.padding, w, ow);
                        if lo < hi {
                            let start = lo + kj - win.padding;
                            for (d, &v) in drow[start..start + hi - lo].iter_mut().zip(&line[lo..hi]) {
                                *d += v;
                            }
                        }
                        continue;
                    }
                    for (ox, &v) in line.iter().enumerate() {
                        let ix = ox as isize * s - p + kj as isize;
                        if ix >= 0 && ix < w as isize {
                            drow[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}
