//! Foreground segmentation: confidence prediction, thresholding, contour
//! extraction and masking.

mod binarize;
mod contour;
mod odnet;

use image::{Rgb, RgbImage};
use ismo_nn::{Checkpoint, Mode, Module};

pub use binarize::{bin_of, binarize, otsu_threshold, ThresholdMethod};
pub use contour::{extract_object_mask, fill_border, find_borders, Border};
pub use odnet::{OdNet, SegmenterConfig};

use crate::config::config_hash;
use crate::error::{CoreError, Result};
use crate::raster::{images_to_batch, BinaryMask, ConfidenceMap};

pub const CHECKPOINT_KIND: &str = "odnet";

/// Black out everything outside `mask`.
pub fn apply_mask(image: &RgbImage, mask: &BinaryMask) -> Result<RgbImage> {
    if (image.width() as usize, image.height() as usize) != (mask.width(), mask.height()) {
        return Err(CoreError::Shape(format!(
            "image is {}x{} but mask is {}x{}",
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }
    let mut out = image.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        if !mask.get(x as usize, y as usize) {
            *px = Rgb([0, 0, 0]);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Segmentation {
    pub confidence: ConfidenceMap,
    pub binary: BinaryMask,
    /// Filled object region; all zero when nothing was found.
    pub mask: BinaryMask,
    pub segmented: RgbImage,
    /// The object could not be found and `segmented` is the input image.
    pub fallback: bool,
}

/// Binarize a confidence map, keep the main object and mask the image. An
/// empty result passes the image through unchanged with `fallback` set.
pub fn postprocess(image: &RgbImage, confidence: ConfidenceMap, method: ThresholdMethod) -> Result<Segmentation> {
    let binary = binarize(&confidence, method);
    match extract_object_mask(&binary) {
        Some(mask) => {
            let segmented = apply_mask(image, &mask)?;
            Ok(Segmentation { confidence, binary, mask, segmented, fallback: false })
        }
        None => {
            log::warn!("segmentation found no object; using the unsegmented image");
            let mask = BinaryMask::new(binary.width(), binary.height());
            Ok(Segmentation { confidence, binary, mask, segmented: image.clone(), fallback: true })
        }
    }
}

/// Inference wrapper around a trained [`OdNet`].
pub struct Segmenter {
    pub config: SegmenterConfig,
    pub net: OdNet<f32>,
}

impl Segmenter {
    pub fn new(config: SegmenterConfig) -> Result<Self> {
        let net = OdNet::new(&config)?;
        Ok(Self { config, net })
    }

    fn check_input(&self, image: &RgbImage) -> Result<()> {
        let s = self.config.input_size as u32;
        if image.dimensions() != (s, s) {
            return Err(CoreError::Shape(format!(
                "segmenter expects {s}x{s}x3 images, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        Ok(())
    }

    pub fn predict_confidence(&mut self, image: &RgbImage) -> Result<ConfidenceMap> {
        self.check_input(image)?;
        let x = images_to_batch(&[image])?;
        let y = self.net.forward(&x, Mode::Eval);
        let (_, _, h, w) = y.dims4();
        ConfidenceMap::from_vec(w, h, y.into_vec()).map_err(|e| match e {
            CoreError::Argument(m) => CoreError::numeric("odnet.head", m),
            other => other,
        })
    }

    pub fn segment(&mut self, image: &RgbImage) -> Result<Segmentation> {
        let conf = self.predict_confidence(image)?;
        postprocess(image, conf, self.config.threshold)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let cfg = serde_json::to_value(&self.config).expect("config serializes");
        Checkpoint::from_module(CHECKPOINT_KIND, cfg, &config_hash(&self.config), &self.net)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != CHECKPOINT_KIND {
            return Err(CoreError::Config(format!("checkpoint holds a '{}', not an {CHECKPOINT_KIND}", ckpt.kind)));
        }
        let config: SegmenterConfig = serde_json::from_value(ckpt.config.clone())
            .map_err(|e| CoreError::Config(format!("segmenter config in checkpoint: {e}")))?;
        let mut s = Self::new(config)?;
        ckpt.load_into(&mut s.net)?;
        Ok(s)
    }
}
