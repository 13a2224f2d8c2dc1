use std::path::Path;

use image::RgbImage;
use ismo_nn::{Adam, Checkpoint, Mode, Module, ModuleExt, Tensor};

use super::{write_history, Batches, EpochLosses, TrainConfig};
use crate::adversary::Discriminator;
use crate::error::{CoreError, Result};
use crate::geometry::Dataset;
use crate::losses::{discriminator_bce_logits, generator_bce_logits, loss_3d_grad, loss_iso_grad, LossBreakdown};
use crate::raster::{images_to_batch, BinaryMask};
use crate::reconstructor::{RecNet, Reconstructor};
use crate::segmenter::{apply_mask, Segmenter};

/// The network input for a render: the segmenter's masked output, the
/// render masked by its footprint, or the render itself.
pub fn prepare_input(
    image: &RgbImage,
    footprint: &BinaryMask,
    segmenter: Option<&mut Segmenter>,
    mask_footprint: bool,
) -> Result<RgbImage> {
    match segmenter {
        Some(seg) => Ok(seg.segment(image)?.segmented),
        None if mask_footprint => apply_mask(image, footprint),
        None => Ok(image.clone()),
    }
}

/// Input images paired with ground-truth surfaces `[3, H, W]`.
#[derive(Clone, Debug, Default)]
pub struct RecSamples {
    pub images: Vec<RgbImage>,
    pub surfaces: Vec<Tensor<f32>>,
}

impl RecSamples {
    /// Frames `frames` of `ds`. With a segmenter the images are its masked
    /// output; with `mask_footprint` they are masked by the render footprint.
    pub fn from_dataset(
        ds: &Dataset,
        frames: &[usize],
        mut segmenter: Option<&mut Segmenter>,
        mask_footprint: bool,
    ) -> Result<Self> {
        let mut out = Self::default();
        for &i in frames {
            let f = &ds.frames[i];
            out.images.push(prepare_input(&f.image, &f.footprint, segmenter.as_deref_mut(), mask_footprint)?);
            out.surfaces.push(ds.states[f.state_id as usize].to_tensor());
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let imgs: Vec<&RgbImage> = idx.iter().map(|&i| &self.images[i]).collect();
        let gts: Vec<Tensor<f32>> = idx.iter().map(|&i| self.surfaces[i].clone()).collect();
        Ok((images_to_batch(&imgs)?, Tensor::stack(&gts)?))
    }
}

fn to_f64(t: &Tensor<f32>) -> Tensor<f64> {
    t.cast()
}

fn check(term: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CoreError::numeric(term, format!("value {v}")))
    }
}

/// Alternating optimization of a generator and a discriminator.
pub struct AdversarialTrainer {
    pub generator: RecNet<f32>,
    pub discriminator: Discriminator<f32>,
    pub config: TrainConfig,
    opt_g: Adam<f32>,
    opt_d: Adam<f32>,
}

impl AdversarialTrainer {
    pub fn new(generator: RecNet<f32>, discriminator: Discriminator<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let g_grid = generator.config().output_grid()?;
        if g_grid != discriminator.config().grid {
            return Err(CoreError::Config(format!(
                "generator emits {g_grid}x{g_grid} grids but the discriminator expects {}",
                discriminator.config().grid
            )));
        }
        let opt_g = Adam::new(config.adam());
        let opt_d = Adam::new(config.adam());
        Ok(Self { generator, discriminator, config, opt_g, opt_d })
    }

    pub fn generator_forward(&mut self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.generator.forward_checked(x, Mode::Train)
    }

    /// One discriminator update on a real batch and a (detached) fake batch.
    /// Returns the discriminator loss before the update.
    pub fn d_step(&mut self, real: &Tensor<f32>, fake: &Tensor<f32>) -> Result<f64> {
        let w = self.config.loss_weights.adv;
        let d = &mut self.discriminator;
        d.zero_grad();
        let zr: Vec<f64> = d.forward_logits(real, Mode::Train)?.data().iter().map(|&v| v as f64).collect();
        let (_, gr, _) = discriminator_bce_logits(&zr, &[0.0]);
        d.backward(&Tensor::from_vec(&[zr.len(), 1], gr.iter().map(|g| (g * w) as f32).collect())?);
        let zf: Vec<f64> = d.forward_logits(fake, Mode::Train)?.data().iter().map(|&v| v as f64).collect();
        let (ld, _, gf) = discriminator_bce_logits(&zr, &zf);
        check("ld", ld)?;
        d.backward(&Tensor::from_vec(&[zf.len(), 1], gf.iter().map(|g| (g * w) as f32).collect())?);
        if w > 0.0 {
            self.opt_d.step(d);
        }
        Ok(ld)
    }

    /// One generator update. `pred` must come from the immediately preceding
    /// [`generator_forward`](Self::generator_forward). Returns
    /// `(l3d, liso, lg)` before the update.
    pub fn g_step(&mut self, pred: &Tensor<f32>, gt: &Tensor<f32>) -> Result<(f64, f64, f64)> {
        let w = &self.config.loss_weights;
        let p64 = to_f64(pred);
        let (l3d, g3d) = loss_3d_grad(&p64, &to_f64(gt))?;
        check("l3d", l3d)?;
        let (liso, giso) = loss_iso_grad(&p64, &self.config.isometry)?;
        check("liso", liso)?;
        let z: Vec<f64> =
            self.discriminator.forward_logits(pred, Mode::Frozen)?.data().iter().map(|&v| v as f64).collect();
        let (lg, gz) = generator_bce_logits(&z);
        check("lg", lg)?;
        let gz = Tensor::from_vec(&[z.len(), 1], gz.iter().map(|g| (g * w.adv) as f32).collect())?;
        let g_adv = self.discriminator.backward(&gz);
        let mut grad = Tensor::zeros(pred.shape());
        for (((o, &a), &b), &c) in grad.data_mut().iter_mut().zip(g3d.data()).zip(giso.data()).zip(g_adv.data()) {
            *o = (w.l3d * a + w.iso * b) as f32 + c;
        }
        self.generator.zero_grad();
        self.generator.backward(&grad);
        self.opt_g.step(&mut self.generator);
        Ok((l3d, liso, lg))
    }

    pub fn train_batch(&mut self, x: &Tensor<f32>, gt: &Tensor<f32>) -> Result<LossBreakdown> {
        let sched = self.config.gan_schedule.clone();
        let pred = self.generator_forward(x)?;
        let mut ld = 0.0;
        for s in 0..sched.discriminator_steps {
            let v = self.d_step(gt, &pred)?;
            if s == 0 {
                ld = v;
            }
        }
        let (l3d, liso, lg) = self.g_step(&pred, gt)?;
        for _ in 1..sched.generator_steps {
            let pred = self.generator_forward(x)?;
            self.g_step(&pred, gt)?;
        }
        LossBreakdown::new(l3d, liso, lg, ld)
    }

    fn snapshot(&self) -> (Checkpoint, Checkpoint) {
        (
            Checkpoint::from_module("g", serde_json::Value::Null, "", &self.generator),
            Checkpoint::from_module("d", serde_json::Value::Null, "", &self.discriminator),
        )
    }

    /// Run `config.epochs_rec` epochs. With `out_dir`, the history CSV is
    /// rewritten after every epoch and checkpoints are saved every
    /// `config.checkpoint_every` epochs.
    pub fn train(&mut self, data: &RecSamples, out_dir: Option<&Path>) -> Result<Vec<EpochLosses>> {
        if data.is_empty() {
            return Err(CoreError::Argument("reconstruction training set is empty".into()));
        }
        let mut batches = Batches::new(data.len(), self.config.batch_size, self.config.seed);
        let mut history = Vec::with_capacity(self.config.epochs_rec);
        for epoch in 1..=self.config.epochs_rec {
            let (good_g, good_d) = self.snapshot();
            let mut per_batch = vec![LossBreakdown::default(); batches.batches.len()];
            for b in batches.epoch_order() {
                let idx = &batches.batches[b];
                let (x, gt) = data.batch(idx)?;
                match self.train_batch(&x, &gt) {
                    Ok(l) => per_batch[b] = l,
                    Err(CoreError::Numeric { location, detail }) => {
                        good_g.load_into(&mut self.generator)?;
                        good_d.load_into(&mut self.discriminator)?;
                        return Err(CoreError::numeric(
                            format!("epoch {epoch} batch {b} ({location})"),
                            format!("{detail}; weights restored to the start of the epoch"),
                        ));
                    }
                    Err(e) => return Err(e),
                }
            }
            let n = data.len() as f64;
            let mut acc = [0.0f64; 4];
            for (l, idx) in per_batch.iter().zip(&batches.batches) {
                let k = idx.len() as f64;
                acc[0] += l.l3d * k;
                acc[1] += l.liso * k;
                acc[2] += l.lg * k;
                acc[3] += l.ld * k;
            }
            let losses = LossBreakdown::new(acc[0] / n, acc[1] / n, acc[2] / n, acc[3] / n)?;
            log::info!(
                "epoch {epoch}: l3d {:.4} liso {:.4} lg {:.4} ld {:.4}",
                losses.l3d,
                losses.liso,
                losses.lg,
                losses.ld
            );
            history.push(EpochLosses { epoch, losses });
            if let Some(dir) = out_dir {
                write_history(&history, &dir.join("history.csv"))?;
                let every = self.config.checkpoint_every;
                if every > 0 && epoch % every == 0 {
                    self.save(dir, &format!("_epoch{epoch:04}"))?;
                }
            }
        }
        Ok(history)
    }

    /// Write `generator{suffix}.ckpt` and `discriminator{suffix}.ckpt`.
    pub fn save(&self, dir: &Path, suffix: &str) -> Result<()> {
        let g = Reconstructor::checkpoint_of(&self.generator);
        g.save(&dir.join(format!("generator{suffix}.ckpt")))?;
        self.discriminator.checkpoint().save(&dir.join(format!("discriminator{suffix}.ckpt")))?;
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::adversary::{DiscBlock, DiscriminatorConfig};
    use crate::reconstructor::{DecoderSpec, EncoderSpec, PoolSpec, RecNetConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 32x32 images to a 16x16 grid.
    pub(crate) fn tiny_nets() -> (RecNet<f32>, Discriminator<f32>) {
        let p = |kernel, stride| PoolSpec { kernel, stride, padding: 0 };
        let rc = RecNetConfig {
            input_size: 32,
            encoder: vec![
                EncoderSpec { channels: 4, kernel: 3, pool: p(2, 2) },
                EncoderSpec { channels: 8, kernel: 3, pool: p(2, 2) },
            ],
            decoder: vec![DecoderSpec { channels: 4, kernel: 4, stride: 2, padding: 1, skip_from: Some(0) }],
            ..RecNetConfig::full()
        };
        let b = |channels, batch_norm| DiscBlock { channels, kernel: 3, stride: 2, padding: 1, batch_norm };
        let dc = DiscriminatorConfig { grid: 16, blocks: vec![b(4, false), b(8, true)], ..Default::default() };
        (RecNet::new(&rc).unwrap(), Discriminator::new(&dc).unwrap())
    }

    pub(crate) fn tiny_samples(n: usize, seed: u64) -> RecSamples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = RecSamples::default();
        for _ in 0..n {
            s.images.push(RgbImage::from_fn(32, 32, |_, _| image::Rgb([rng.random(), rng.random(), rng.random()])));
            let v = (0..3 * 16 * 16).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            s.surfaces.push(Tensor::from_vec(&[3, 16, 16], v).unwrap());
        }
        s
    }

    fn trainer(cfg: TrainConfig) -> AdversarialTrainer {
        let (g, d) = tiny_nets();
        AdversarialTrainer::new(g, d, cfg).unwrap()
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig { epochs_rec: epochs, batch_size: 4, ..TrainConfig::default() }
    }

    #[test]
    fn zero_learning_rate_gives_constant_losses() {
        let mut t = trainer(TrainConfig { learning_rate: 0.0, ..cfg(3) });
        let h = t.train(&tiny_samples(10, 1), None).unwrap();
        assert_eq!(h[0].losses, h[1].losses);
        assert_eq!(h[1].losses, h[2].losses);
    }

    #[test]
    fn zero_adversarial_weight_freezes_discriminator() {
        let mut c = cfg(2);
        c.loss_weights.adv = 0.0;
        let mut t = trainer(c);
        let before = t.discriminator.flat_values();
        let g_before = t.generator.flat_values();
        let h = t.train(&tiny_samples(8, 2), None).unwrap();
        assert_eq!(before, t.discriminator.flat_values());
        assert_ne!(g_before, t.generator.flat_values());
        assert!(h[0].losses.lg.is_finite() && h[0].losses.ld > 0.0);
    }

    #[test]
    fn steps_only_touch_their_own_network() {
        let mut t = trainer(cfg(1));
        let (x, gt) = tiny_samples(4, 3).batch(&[0, 1, 2, 3]).unwrap();
        let g0 = t.generator.flat_values();
        let pred = t.generator_forward(&x).unwrap();
        t.d_step(&gt, &pred).unwrap();
        assert_eq!(g0, t.generator.flat_values());
        let d0 = t.discriminator.flat_values();
        t.g_step(&pred, &gt).unwrap();
        assert_eq!(d0, t.discriminator.flat_values());
        assert_ne!(g0, t.generator.flat_values());
    }

    #[test]
    fn non_finite_loss_restores_weights() {
        let mut data = tiny_samples(8, 4);
        data.surfaces[5].data_mut()[17] = f32::NAN;
        let mut t = trainer(cfg(2));
        let g0 = t.generator.flat_values();
        let d0 = t.discriminator.flat_values();
        let err = t.train(&data, None).unwrap_err();
        match &err {
            CoreError::Numeric { location, .. } => assert!(location.starts_with("epoch 1 batch"), "{location}"),
            e => panic!("unexpected {e}"),
        }
        assert_eq!(g0, t.generator.flat_values());
        assert_eq!(d0, t.discriminator.flat_values());
    }

    #[test]
    fn overfits_a_small_set() {
        let mut c = cfg(300);
        c.learning_rate = 3e-3;
        // noise targets: both priors pull away from them
        c.loss_weights.iso = 0.0;
        c.loss_weights.adv = 0.0;
        let mut t = trainer(c);
        let h = t.train(&tiny_samples(4, 5), None).unwrap();
        let (first, last) = (h[0].losses.l3d, h.last().unwrap().losses.l3d);
        assert!(last < 0.5 * first, "l3d {first} -> {last}");
    }

    #[test]
    fn writes_history_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = trainer(TrainConfig { checkpoint_every: 2, ..cfg(4) });
        let h = t.train(&tiny_samples(4, 6), Some(dir.path())).unwrap();
        let read = super::super::read_history(&dir.path().join("history.csv")).unwrap();
        assert_eq!(read.len(), 4);
        assert!((read[3].losses.total - h[3].losses.total).abs() < 1e-9);
        for e in [2, 4] {
            let p = dir.path().join(format!("generator_epoch{e:04}.ckpt"));
            let r = Reconstructor::from_checkpoint(&Checkpoint::load(&p).unwrap()).unwrap();
            if e == 4 {
                assert_eq!(r.net.flat_values(), t.generator.flat_values());
            }
            assert!(dir.path().join(format!("discriminator_epoch{e:04}.ckpt")).exists());
        }
        assert!(!dir.path().join("generator_epoch0001.ckpt").exists());
    }
}
