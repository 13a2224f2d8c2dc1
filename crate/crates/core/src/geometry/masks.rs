//! Mixed foreground/background samples for segmentation training.

use image::{imageops, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::RenderedFrame;
use crate::error::{CoreError, Result};
use crate::raster::BinaryMask;

#[derive(Clone, Debug)]
pub struct MaskSample {
    pub image: RgbImage,
    pub mask: BinaryMask,
    pub frame_index: usize,
    pub background_index: usize,
    pub shift: (i32, i32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskConfig {
    pub count: usize,
    /// Translations are drawn uniformly from [-max_shift, max_shift] px per axis.
    pub max_shift: i32,
    /// Minimum fraction of the footprint that must stay inside the frame.
    pub min_visible: f64,
    pub seed: u64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self { count: 1000, max_shift: 40, min_visible: 0.5, seed: 7 }
    }
}

/// Paste the frame's footprint, translated by `shift`, over `background`.
pub fn composite(frame: &RenderedFrame, background: &RgbImage, shift: (i32, i32)) -> MaskSample {
    let (w, h) = frame.image.dimensions();
    let mut image = if background.dimensions() == (w, h) {
        background.clone()
    } else {
        imageops::resize(background, w, h, imageops::FilterType::Triangle)
    };
    let mask = frame.footprint.shifted(shift.0, shift.1);
    for y in 0..h as usize {
        for x in 0..w as usize {
            if frame.footprint.get(x, y) {
                let (nx, ny) = (x as i64 + shift.0 as i64, y as i64 + shift.1 as i64);
                if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                    image.put_pixel(nx as u32, ny as u32, *frame.image.get_pixel(x as u32, y as u32));
                }
            }
        }
    }
    MaskSample { image, mask, frame_index: 0, background_index: 0, shift }
}

pub fn build_mask_dataset(
    frames: &[RenderedFrame],
    backgrounds: &[RgbImage],
    cfg: &MaskConfig,
) -> Result<Vec<MaskSample>> {
    if frames.is_empty() || backgrounds.is_empty() {
        return Err(CoreError::Argument(format!(
            "mask dataset needs frames and backgrounds (got {} and {})",
            frames.len(),
            backgrounds.len()
        )));
    }
    if cfg.max_shift < 0 || !(0.0..=1.0).contains(&cfg.min_visible) {
        return Err(CoreError::Argument(format!(
            "max_shift={} must be >= 0 and min_visible={} within [0,1]",
            cfg.max_shift, cfg.min_visible
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.count);
    for _ in 0..cfg.count {
        let fi = rng.random_range(0..frames.len());
        let bi = rng.random_range(0..backgrounds.len());
        let frame = &frames[fi];
        let total = frame.footprint.count();
        if total == 0 {
            return Err(CoreError::Argument(format!("frame {fi} has an empty footprint")));
        }
        let mut shift = (0, 0);
        for _ in 0..32 {
            let cand = (
                rng.random_range(-cfg.max_shift..=cfg.max_shift),
                rng.random_range(-cfg.max_shift..=cfg.max_shift),
            );
            let kept = frame.footprint.shifted(cand.0, cand.1).count();
            if kept as f64 >= cfg.min_visible * total as f64 && kept > 0 {
                shift = cand;
                break;
            }
        }
        let mut s = composite(frame, &backgrounds[bi], shift);
        s.frame_index = fi;
        s.background_index = bi;
        out.push(s);
    }
    Ok(out)
}

/// Simple scenes to composite onto: sky, office interior and foliage,
/// cycled in that order.
pub fn procedural_backgrounds(count: usize, width: u32, height: u32, seed: u64) -> Vec<RgbImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| match i % 3 {
            0 => sky(width, height, &mut rng),
            1 => office(width, height, &mut rng),
            _ => foliage(width, height, &mut rng),
        })
        .collect()
}

fn jitter(rng: &mut ChaCha8Rng, base: [u8; 3], amount: i32) -> Rgb<u8> {
    Rgb(base.map(|c| (c as i32 + rng.random_range(-amount..=amount)).clamp(0, 255) as u8))
}

fn sky(w: u32, h: u32, rng: &mut ChaCha8Rng) -> RgbImage {
    let mut img = RgbImage::from_fn(w, h, |_, y| {
        let t = y as f64 / h as f64;
        Rgb([(90.0 + 100.0 * t) as u8, (140.0 + 80.0 * t) as u8, (230.0 - 20.0 * t) as u8])
    });
    for _ in 0..6 {
        let (cx, cy) = (rng.random_range(0..w) as f64, rng.random_range(0..h / 2) as f64);
        let (rx, ry) = (rng.random_range(15.0..45.0), rng.random_range(6.0..16.0));
        for y in 0..h {
            for x in 0..w {
                let d = ((x as f64 - cx) / rx).powi(2) + ((y as f64 - cy) / ry).powi(2);
                if d < 1.0 {
                    let p = img.get_pixel_mut(x, y);
                    let a = 0.7 * (1.0 - d);
                    for c in 0..3 {
                        p[c] = (p[c] as f64 * (1.0 - a) + 250.0 * a) as u8;
                    }
                }
            }
        }
    }
    img
}

fn office(w: u32, h: u32, rng: &mut ChaCha8Rng) -> RgbImage {
    let floor = h * 2 / 3;
    let mut img = RgbImage::from_fn(w, h, |_, y| if y < floor { Rgb([196, 184, 160]) } else { Rgb([110, 80, 60]) });
    for _ in 0..7 {
        let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
        let (bw, bh) = (rng.random_range(4..(w / 3).max(5)), rng.random_range(4..(h / 3).max(5)));
        let base = [rng.random_range(40..220u8), rng.random_range(40..220u8), rng.random_range(40..220u8)];
        for y in y0..(y0 + bh).min(h) {
            for x in x0..(x0 + bw).min(w) {
                img.put_pixel(x, y, jitter(rng, base, 6));
            }
        }
    }
    img
}

fn foliage(w: u32, h: u32, rng: &mut ChaCha8Rng) -> RgbImage {
    let mut img = RgbImage::from_fn(w, h, |_, _| Rgb([40, 90, 40]));
    for _ in 0..5 {
        let x0 = rng.random_range(0..w);
        let tw = rng.random_range(5..14);
        for y in 0..h {
            for x in x0..(x0 + tw).min(w) {
                img.put_pixel(x, y, Rgb([85, 60, 35]));
            }
        }
    }
    for _ in 0..250 {
        let (cx, cy) = (rng.random_range(0..w) as i64, rng.random_range(0..h) as i64);
        let r = rng.random_range(2..7i64);
        let base = [rng.random_range(20..90u8), rng.random_range(100..190u8), rng.random_range(20..80u8)];
        for y in (cy - r).max(0)..(cy + r).min(h as i64) {
            for x in (cx - r).max(0)..(cx + r).min(w as i64) {
                if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                    img.put_pixel(x as u32, y as u32, Rgb(base));
                }
            }
        }
    }
    img
}
