//! Plain raster types shared by the renderer, segmenter and evaluator.

use image::RgbImage;
use ismo_nn::Tensor;

use crate::error::{CoreError, Result};

/// Row-major binary raster, values 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height] }
    }

    pub fn filled(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![1; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
            }
        }
        Self { width, height, data }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(CoreError::Shape(format!(
                "mask data has {} entries, expected {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(CoreError::Argument("mask values must be 0 or 1".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// Intersection over union. Two empty masks count as a perfect match.
    pub fn iou(&self, other: &BinaryMask) -> Result<f64> {
        if self.width != other.width || self.height != other.height {
            return Err(CoreError::Shape(format!(
                "iou of {}x{} and {}x{} masks",
                self.width, self.height, other.width, other.height
            )));
        }
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.data.iter().zip(&other.data) {
            inter += (a & b) as usize;
            union += (a | b) as usize;
        }
        Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the set pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bb = Some(match bb {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bb
    }

    /// Shift by `(dx, dy)` pixels, dropping whatever leaves the frame.
    pub fn shifted(&self, dx: i32, dy: i32) -> BinaryMask {
        let mut out = BinaryMask::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    let (nx, ny) = (x as i64 + dx as i64, y as i64 + dy as i64);
                    if nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height {
                        out.set(nx as usize, ny as usize, true);
                    }
                }
            }
        }
        out
    }

    pub fn to_image(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Luma([if self.get(x as usize, y as usize) { 255 } else { 0 }])
        })
    }

    /// Any non-zero pixel is foreground.
    pub fn from_image(img: &image::GrayImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        Self::from_fn(w, h, |x, y| img.get_pixel(x as u32, y as u32)[0] > 127)
    }
}

/// Per-pixel foreground confidence in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl ConfidenceMap {
    pub fn from_vec(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(CoreError::Shape(format!(
                "confidence map has {} values, expected {width}x{height}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CoreError::Argument(format!("confidence value {v} outside [0,1]")));
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn to_image(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.values[y as usize * self.width + x as usize];
            image::Luma([(v * 255.0).round() as u8])
        })
    }
}

/// RGB image to a `[3, H, W]` tensor scaled to [0, 1].
pub fn image_to_chw(img: &RgbImage) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0f32; 3 * w * h];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = px[c] as f32 / 255.0;
        }
    }
    Tensor::from_vec(&[3, h, w], data).expect("consistent shape")
}

/// Stack images into an `[N, 3, H, W]` batch.
pub fn images_to_batch(imgs: &[&RgbImage]) -> Result<Tensor<f32>> {
    let first = imgs.first().ok_or_else(|| CoreError::Argument("empty image batch".into()))?;
    let (w, h) = first.dimensions();
    let mut data = Vec::with_capacity(imgs.len() * 3 * (w * h) as usize);
    for img in imgs {
        if img.dimensions() != (w, h) {
            return Err(CoreError::Shape(format!(
                "batch mixes {}x{} and {}x{} images",
                w,
                h,
                img.width(),
                img.height()
            )));
        }
        data.extend_from_slice(image_to_chw(img).data());
    }
    Ok(Tensor::from_vec(&[imgs.len(), 3, h as usize, w as usize], data)?)
}

pub fn mask_to_tensor(mask: &BinaryMask) -> Tensor<f32> {
    let data = mask.data().iter().map(|&v| v as f32).collect();
    Tensor::from_vec(&[1, mask.height(), mask.width()], data).expect("consistent shape")
}
