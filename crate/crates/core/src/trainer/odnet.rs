use ismo_nn::{Adam, Checkpoint, Mode, Module, ModuleExt, Tensor};
use serde::{Deserialize, Serialize};

use super::{Batches, TrainConfig};
use crate::error::{CoreError, Result};
use crate::geometry::MaskSample;
use crate::raster::{images_to_batch, mask_to_tensor};
use crate::segmenter::Segmenter;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdEpoch {
    pub epoch: usize,
    pub mse: f64,
}

/// Mean squared error between predicted confidences and 0/1 targets, with
/// its gradient.
pub fn mask_mse(pred: &Tensor<f32>, target: &Tensor<f32>) -> (f64, Tensor<f32>) {
    let n = pred.len() as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let mut sum = 0.0f64;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p as f64 - t as f64;
        sum += d * d;
        *g = (2.0 * d / n) as f32;
    }
    (sum / n, grad)
}

/// Index ranges of the training part and the trailing held-out part
/// (`holdout` of the samples, at least one when `n >= 2`).
pub fn holdout_split(n: usize, holdout: f64) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let k = ((n as f64 * holdout).round() as usize).max((n >= 2) as usize).min(n);
    (0..n - k, n - k..n)
}

/// Supervised training on image/mask pairs. On a non-finite loss the
/// weights from the start of the failing epoch are restored.
pub fn train_odnet(seg: &mut Segmenter, samples: &[MaskSample], cfg: &TrainConfig) -> Result<Vec<OdEpoch>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(CoreError::Argument("segmenter training set is empty".into()));
    }
    let size = seg.config.input_size as u32;
    if let Some(s) = samples.iter().find(|s| s.image.dimensions() != (size, size)) {
        return Err(CoreError::Shape(format!(
            "training image is {}x{}, segmenter expects {size}x{size}",
            s.image.width(),
            s.image.height()
        )));
    }
    let mut opt = Adam::new(cfg.adam());
    let mut batches = Batches::new(samples.len(), cfg.batch_size, cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs_od);
    for epoch in 1..=cfg.epochs_od {
        let last_good = Checkpoint::from_module("odnet", serde_json::Value::Null, "", &seg.net);
        let mut per_batch = vec![0.0f64; batches.batches.len()];
        for b in batches.epoch_order() {
            let idx = &batches.batches[b];
            let imgs: Vec<_> = idx.iter().map(|&i| &samples[i].image).collect();
            let x = images_to_batch(&imgs)?;
            let masks: Vec<Tensor<f32>> = idx.iter().map(|&i| mask_to_tensor(&samples[i].mask)).collect();
            let target = Tensor::stack(&masks)?;
            seg.net.zero_grad();
            let y = seg.net.forward(&x, Mode::Train);
            let (loss, grad) = mask_mse(&y, &target);
            if !loss.is_finite() {
                last_good.load_into(&mut seg.net)?;
                return Err(CoreError::numeric(
                    format!("segmenter epoch {epoch} batch {b}"),
                    format!("mse is {loss}; weights restored to the start of the epoch"),
                ));
            }
            seg.net.backward(&grad);
            opt.step(&mut seg.net);
            per_batch[b] = loss * idx.len() as f64;
        }
        let mse = per_batch.iter().sum::<f64>() / samples.len() as f64;
        log::info!("segmenter epoch {epoch}: mse {mse:.6}");
        history.push(OdEpoch { epoch, mse });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::BinaryMask;
    use crate::segmenter::SegmenterConfig;
    use image::RgbImage;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn squares(n: usize, size: u32, seed: u64) -> Vec<MaskSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let (x0, y0) = (rng.random_range(0..size / 2), rng.random_range(0..size / 2));
                let w = size / 3;
                let inside = |x: u32, y: u32| x >= x0 && x < x0 + w && y >= y0 && y < y0 + w;
                let image = RgbImage::from_fn(size, size, |x, y| {
                    let v = if inside(x, y) { 200 } else { rng.random_range(0..60) };
                    image::Rgb([v, v, v])
                });
                let mask = BinaryMask::from_fn(size as usize, size as usize, |x, y| inside(x as u32, y as u32));
                MaskSample { image, mask, frame_index: i, background_index: 0, shift: (0, 0) }
            })
            .collect()
    }

    fn tiny() -> Segmenter {
        Segmenter::new(SegmenterConfig { depth: 2, input_size: 32, ..Default::default() }).unwrap()
    }

    #[test]
    fn holdout_ranges() {
        assert_eq!(holdout_split(1000, 0.2), (0..800, 800..1000));
        assert_eq!(holdout_split(3, 0.2), (0..2, 2..3));
        assert_eq!(holdout_split(1, 0.2), (0..1, 1..1));
    }

    #[test]
    fn mse_gradient_matches_differences() {
        let p = Tensor::from_vec(&[1, 1, 1, 4], vec![0.5f32, 0.0, 1.0, 0.25]).unwrap();
        let t = Tensor::from_vec(&[1, 1, 1, 4], vec![1.0f32, 0.0, 0.0, 0.25]).unwrap();
        let (l, g) = mask_mse(&p, &t);
        assert!((l - (0.25 + 1.0) / 4.0).abs() < 1e-12);
        assert_eq!(g.data(), &[-0.25, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn learns_bright_squares() {
        let mut seg = tiny();
        let cfg = TrainConfig { epochs_od: 15, batch_size: 4, learning_rate: 1e-2, ..Default::default() };
        let h = train_odnet(&mut seg, &squares(16, 32, 1), &cfg).unwrap();
        assert!(h.last().unwrap().mse < 0.5 * h[0].mse, "{h:?}");
    }

    #[test]
    fn rejects_wrong_size_and_empty_set() {
        let mut seg = tiny();
        let cfg = TrainConfig { epochs_od: 1, ..Default::default() };
        assert!(matches!(train_odnet(&mut seg, &squares(2, 40, 0), &cfg), Err(CoreError::Shape(_))));
        assert!(matches!(train_odnet(&mut seg, &[], &cfg), Err(CoreError::Argument(_))));
    }
}
