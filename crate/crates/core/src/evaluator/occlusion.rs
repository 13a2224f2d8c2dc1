use image::RgbImage;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{e3d_each, reconstruct_all, surface_tensor};
use crate::error::{CoreError, Result};
use crate::geometry::Dataset;
use crate::reconstructor::Reconstructor;
use crate::segmenter::Segmenter;
use crate::trainer::prepare_input;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcclusionConfig {
    /// Occluder radii in pixels.
    pub radii: Vec<u32>,
    /// Occluders per image.
    pub counts: Vec<usize>,
    pub images_per_cell: usize,
    pub color: [u8; 3],
    /// Number of base frames drawn from the most deformed test states.
    pub base_frames: usize,
    pub seed: u64,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self { radii: vec![3, 5, 7, 9, 11], counts: vec![1, 2, 3, 4, 5], images_per_cell: 10, color: [128; 3], base_frames: 4, seed: 0 }
    }
}

impl OcclusionConfig {
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        if self.radii.is_empty() || self.counts.is_empty() {
            return Err(CoreError::Argument("occlusion radii and counts must be non-empty".into()));
        }
        if self.images_per_cell == 0 || self.base_frames == 0 {
            return Err(CoreError::Argument("images_per_cell and base_frames must be at least 1".into()));
        }
        if let Some(r) = self.radii.iter().find(|&&r| r > width.min(height)) {
            return Err(CoreError::Argument(format!("occluder radius {r} exceeds the {width}x{height} image")));
        }
        Ok(())
    }
}

/// Mean e3d per (count, radius) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcclusionGrid {
    pub radii: Vec<u32>,
    pub counts: Vec<usize>,
    pub frames: Vec<usize>,
    pub baseline: f64,
    /// `e3d[c][r]` for `counts[c]` occluders of radius `radii[r]`.
    pub e3d: Vec<Vec<f64>>,
}

impl OcclusionGrid {
    /// Mean over counts, one value per radius.
    pub fn by_radius(&self) -> Vec<f64> {
        (0..self.radii.len())
            .map(|r| self.e3d.iter().map(|row| row[r]).sum::<f64>() / self.e3d.len() as f64)
            .collect()
    }
}

/// Up to `n` frames chosen with a seeded draw among the test frames whose
/// states are in the top tenth by deformation size.
pub fn occlusion_frames(ds: &Dataset, n: usize, seed: u64) -> Result<Vec<usize>> {
    let mut states = ds.split.test.clone();
    if states.is_empty() {
        return Err(CoreError::Argument("the test split is empty".into()));
    }
    let mag = |s: usize| ds.states[s].deformation_magnitude();
    states.sort_by(|&a, &b| mag(b).total_cmp(&mag(a)).then(a.cmp(&b)));
    states.truncate(states.len().div_ceil(10));
    let candidates = ds.frames_of(&states, false);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> =
        sample(&mut rng, candidates.len(), n.min(candidates.len())).into_iter().map(|i| candidates[i]).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Paint filled discs.
pub fn paint_discs(img: &mut RgbImage, centers: &[(f64, f64)], radius: u32, color: [u8; 3]) {
    let r = radius as f64;
    for &(cx, cy) in centers {
        let (x0, x1) = ((cx - r).floor().max(0.0) as u32, ((cx + r).ceil() as u32).min(img.width().saturating_sub(1)));
        let (y0, y1) = ((cy - r).floor().max(0.0) as u32, ((cy + r).ceil() as u32).min(img.height().saturating_sub(1)));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r * r {
                    img.put_pixel(x, y, image::Rgb(color));
                }
            }
        }
    }
}

fn cell_seed(seed: u64, count: usize, radius: u32) -> u64 {
    seed ^ (count as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (radius as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Occlude the base frames with grey discs centred uniformly in each
/// frame's footprint bounding box and average e3d per cell. Cells with zero
/// radius or zero occluders reproduce the baseline exactly.
pub fn occlusion_sweep(
    rec: &mut Reconstructor,
    mut seg: Option<&mut Segmenter>,
    ds: &Dataset,
    frames: &[usize],
    cfg: &OcclusionConfig,
) -> Result<OcclusionGrid> {
    let (w, h) = (ds.scene.config.width, ds.scene.config.height);
    cfg.validate(w, h)?;
    if frames.is_empty() {
        return Err(CoreError::Argument("no base frames for the occlusion sweep".into()));
    }
    let gts: Vec<_> = frames.iter().map(|&i| surface_tensor(&ds.states[ds.frames[i].state_id as usize])).collect();
    let bboxes = frames
        .iter()
        .map(|&i| {
            ds.frames[i].footprint.bounding_box().ok_or_else(|| CoreError::Argument(format!("frame {i} has an empty footprint")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut score = |images: Vec<RgbImage>, seg: Option<&mut Segmenter>| -> Result<f64> {
        let mut seg = seg;
        let inputs = images
            .iter()
            .zip(frames)
            .map(|(img, &i)| prepare_input(img, &ds.frames[i].footprint, seg.as_deref_mut(), false))
            .collect::<Result<Vec<_>>>()?;
        let preds = reconstruct_all(rec, &inputs, frames.len())?;
        let mut sum = 0.0;
        for (p, g) in preds.iter().zip(&gts) {
            sum += e3d_each(p, g)?[0];
        }
        Ok(sum / frames.len() as f64)
    };
    let clean: Vec<RgbImage> = frames.iter().map(|&i| ds.frames[i].image.clone()).collect();
    let baseline = score(clean.clone(), seg.as_deref_mut())?;
    let mut grid = vec![vec![0.0; cfg.radii.len()]; cfg.counts.len()];
    for (ci, &count) in cfg.counts.iter().enumerate() {
        for (ri, &radius) in cfg.radii.iter().enumerate() {
            if count == 0 || radius == 0 {
                grid[ci][ri] = baseline;
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(cfg.seed, count, radius));
            let mut total = 0.0;
            for _ in 0..cfg.images_per_cell {
                let mut images = clean.clone();
                for (img, &(x0, y0, x1, y1)) in images.iter_mut().zip(&bboxes) {
                    let centers: Vec<(f64, f64)> = (0..count)
                        .map(|_| (rng.random_range(x0 as f64..=x1 as f64 + 1.0), rng.random_range(y0 as f64..=y1 as f64 + 1.0)))
                        .collect();
                    paint_discs(img, &centers, radius, cfg.color);
                }
                total += score(images, seg.as_deref_mut())?;
            }
            grid[ci][ri] = total / cfg.images_per_cell as f64;
        }
    }
    Ok(OcclusionGrid { radii: cfg.radii.clone(), counts: cfg.counts.clone(), frames: frames.to_vec(), baseline, e3d: grid })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discs_cover_expected_area() {
        let mut img = RgbImage::new(64, 64);
        paint_discs(&mut img, &[(32.0, 32.0)], 10, [128; 3]);
        let n = img.pixels().filter(|p| p.0 == [128; 3]).count() as f64;
        assert!((n - std::f64::consts::PI * 100.0).abs() < 20.0, "{n}");
        assert_eq!(img.get_pixel(32, 32).0, [128; 3]);
        assert_eq!(img.get_pixel(32, 44).0, [0; 3]);
    }

    #[test]
    fn radius_zero_paints_at_most_nothing_visible() {
        let mut img = RgbImage::new(8, 8);
        paint_discs(&mut img, &[(4.3, 4.3)], 0, [128; 3]);
        assert!(img.pixels().all(|p| p.0 == [0; 3]));
    }

    #[test]
    fn validation() {
        let c = OcclusionConfig::default();
        assert!(c.validate(224, 224).is_ok());
        assert!(OcclusionConfig { radii: vec![300], ..c.clone() }.validate(224, 224).is_err());
        assert!(OcclusionConfig { counts: vec![], ..c.clone() }.validate(224, 224).is_err());
        assert!(OcclusionConfig { images_per_cell: 0, ..c }.validate(224, 224).is_err());
    }
}
