use std::time::Instant;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::reconstructor::Reconstructor;
use crate::segmenter::Segmenter;

/// Per-frame wall-clock latency in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub p50: f64,
    pub p99: f64,
    pub min: f64,
    pub max: f64,
    pub fps: f64,
}

fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

impl LatencyStats {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let mut s = samples.clone();
        s.sort_by(f64::total_cmp);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        Self {
            p50: nearest_rank(&s, 0.5),
            p99: nearest_rank(&s, 0.99),
            min: s[0],
            max: s[s.len() - 1],
            fps: 1.0 / mean,
            mean,
            samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub frames: usize,
    pub warmup: usize,
    pub iters: usize,
    /// Segmentation followed by reconstruction.
    pub full_pipeline: LatencyStats,
    pub reconstruct_only: LatencyStats,
}

/// Time single-frame inference over `frames`; each iteration processes every
/// frame once and records the mean time per frame.
pub fn measure_throughput(
    rec: &mut Reconstructor,
    seg: &mut Segmenter,
    frames: &[RgbImage],
    warmup: usize,
    iters: usize,
) -> Result<Throughput> {
    if warmup < 3 || iters < 10 {
        return Err(CoreError::Argument(format!("need warmup >= 3 and iters >= 10, got {warmup} and {iters}")));
    }
    if frames.is_empty() {
        return Err(CoreError::Argument("no frames to time".into()));
    }
    let mut recon = |img: &RgbImage, rec: &mut Reconstructor| rec.reconstruct(img).map(|_| ());
    let mut full = |img: &RgbImage, rec: &mut Reconstructor| -> Result<()> {
        let s = seg.segment(img)?;
        rec.reconstruct(&s.segmented).map(|_| ())
    };
    let mut time = |f: &mut dyn FnMut(&RgbImage, &mut Reconstructor) -> Result<()>| -> Result<LatencyStats> {
        for _ in 0..warmup {
            f(&frames[0], rec)?;
        }
        let mut samples = Vec::with_capacity(iters);
        for _ in 0..iters {
            let t = Instant::now();
            for img in frames {
                f(img, rec)?;
            }
            samples.push(t.elapsed().as_secs_f64() / frames.len() as f64);
        }
        Ok(LatencyStats::from_samples(samples))
    };
    let reconstruct_only = time(&mut recon)?;
    let full_pipeline = time(&mut full)?;
    Ok(Throughput { frames: frames.len(), warmup, iters, full_pipeline, reconstruct_only })
}
