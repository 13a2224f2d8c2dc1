//! Training loops for the segmenter and for the generator/discriminator pair.
//!
//! Batches are formed once per run from a seeded shuffle and visited in a
//! fresh seeded order every epoch; with a zero learning rate every epoch
//! therefore sees the same batches and reports the same losses.

mod adversarial;
mod odnet;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adversarial::{prepare_input, AdversarialTrainer, RecSamples};
pub use odnet::{holdout_split, mask_mse, train_odnet, OdEpoch};

use crate::error::{CoreError, Result};
use crate::losses::{IsometryConfig, LossBreakdown};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanSchedule {
    pub generator_steps: usize,
    pub discriminator_steps: usize,
}

impl Default for GanSchedule {
    fn default() -> Self {
        Self { generator_steps: 1, discriminator_steps: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub l3d: f64,
    pub iso: f64,
    /// Scales both adversarial terms; 0 leaves them reported but unused.
    pub adv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { l3d: 1.0, iso: 1.0, adv: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs_rec: usize,
    pub epochs_od: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub gan_schedule: GanSchedule,
    pub loss_weights: LossWeights,
    pub isometry: IsometryConfig,
    /// Write checkpoints every this many epochs (0 disables).
    pub checkpoint_every: usize,
    /// Feed Rec-Net segmented images rather than raw renders.
    pub masked_inputs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 8,
            epochs_rec: 130,
            epochs_od: 30,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            gan_schedule: GanSchedule::default(),
            loss_weights: LossWeights::default(),
            isometry: IsometryConfig::default(),
            checkpoint_every: 5,
            masked_inputs: true,
        }
    }
}

impl TrainConfig {
    /// Shorter schedule for CPU runs on the small synthetic dataset.
    pub fn desk_scale() -> Self {
        Self { epochs_rec: 20, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::Config(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate={} must be finite and >= 0", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("betas ({}, {}) must lie in [0,1)", self.beta1, self.beta2));
        }
        if self.gan_schedule.generator_steps == 0 || self.gan_schedule.discriminator_steps == 0 {
            return bad("gan_schedule steps must be positive".into());
        }
        let w = &self.loss_weights;
        if [w.l3d, w.iso, w.adv].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("loss weights must be finite and >= 0".into());
        }
        self.isometry.validate()
    }

    pub(crate) fn adam(&self) -> ismo_nn::AdamConfig {
        ismo_nn::AdamConfig { lr: self.learning_rate, beta1: self.beta1, beta2: self.beta2, eps: 1e-8 }
    }
}

/// Fixed batches over `0..n` plus an RNG for per-epoch visiting order.
pub(crate) struct Batches {
    pub batches: Vec<Vec<usize>>,
    rng: ChaCha8Rng,
}

impl Batches {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let batches = idx
            .chunks(batch_size)
            .map(|c| {
                let mut b = c.to_vec();
                b.sort_unstable();
                b
            })
            .collect();
        Self { batches, rng }
    }

    pub fn epoch_order(&mut self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.batches.len()).collect();
        order.shuffle(&mut self.rng);
        order
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    #[serde(flatten)]
    pub losses: LossBreakdown,
}

pub const HISTORY_HEADER: &str = "epoch,l3d,liso,lg,ld,total";

pub fn history_csv(history: &[EpochLosses]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for h in history {
        let l = &h.losses;
        s.push_str(&format!("{},{},{},{},{},{}\n", h.epoch, l.l3d, l.liso, l.lg, l.ld, l.total));
    }
    s
}

pub fn write_history(history: &[EpochLosses], path: &Path) -> Result<()> {
    std::fs::write(path, history_csv(history)).map_err(|e| CoreError::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<EpochLosses>> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_HEADER) {
        return Err(CoreError::Config(format!("{}: unexpected history header", path.display())));
    }
    lines
        .map(|line| {
            let v: Vec<&str> = line.split(',').collect();
            let num = |i: usize| -> Result<f64> {
                v.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| CoreError::Config(format!("{}: bad history row '{line}'", path.display())))
            };
            Ok(EpochLosses {
                epoch: num(0)? as usize,
                losses: LossBreakdown { l3d: num(1)?, liso: num(2)?, lg: num(3)?, ld: num(4)?, total: num(5)? },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_everything_once() {
        let mut b = Batches::new(21, 8, 3);
        let mut all: Vec<usize> = b.batches.iter().flatten().copied().collect();
        all.sort();
        assert_eq!(all, (0..21).collect::<Vec<_>>());
        assert_eq!(b.batches.len(), 3);
        assert!(b.batches.iter().all(|x| x.windows(2).all(|w| w[0] < w[1])));
        let mut o = b.epoch_order();
        o.sort();
        assert_eq!(o, vec![0, 1, 2]);
    }

    #[test]
    fn csv_round_trip() {
        let h = vec![EpochLosses { epoch: 1, losses: LossBreakdown::new(0.5, 0.25, 0.1, 1.3).unwrap() }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        write_history(&h, &p).unwrap();
        assert_eq!(read_history(&p).unwrap(), h);
        assert!(history_csv(&h).starts_with("epoch,l3d,liso,lg,ld,total\n1,0.5,0.25,"));
    }

    #[test]
    fn validation() {
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
        assert_eq!(TrainConfig::desk_scale().epochs_rec, 20);
    }
}
