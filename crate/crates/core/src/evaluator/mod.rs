//! Reconstruction error metrics, per-factor breakdowns, occlusion sweeps,
//! timing and plots.

mod occlusion;
pub mod plot;
mod throughput;

use std::collections::BTreeMap;

use ismo_nn::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

pub use occlusion::{occlusion_sweep, occlusion_frames, OcclusionConfig, OcclusionGrid};
pub use throughput::{measure_throughput, LatencyStats, Throughput};

use crate::error::{CoreError, Result};
use crate::geometry::{Dataset, SurfaceState};
use crate::reconstructor::Reconstructor;
use crate::segmenter::Segmenter;
use crate::trainer::prepare_input;

fn sample_views<'a, T: Scalar>(pred: &'a Tensor<T>, gt: &'a Tensor<T>) -> Result<(usize, usize)> {
    if pred.shape() != gt.shape() {
        return Err(CoreError::Shape(format!("prediction {:?} vs ground truth {:?}", pred.shape(), gt.shape())));
    }
    match pred.shape() {
        [n, 3, _, _] if *n > 0 => Ok((*n, pred.len() / n)),
        [3, _, _] => Ok((1, pred.len())),
        s => Err(CoreError::Shape(format!("expected [n, 3, h, w] or [3, h, w] surfaces, got {s:?}"))),
    }
}

/// Normalized error of each state: `|gt - pred|_F / |gt|_F`.
pub fn e3d_each<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<Vec<f64>> {
    let (n, per) = sample_views(pred, gt)?;
    let (p, g) = (pred.data(), gt.data());
    (0..n)
        .map(|i| {
            let (mut num, mut den) = (0.0f64, 0.0f64);
            for k in i * per..(i + 1) * per {
                let gv = g[k].to_f64().unwrap_or(f64::NAN);
                let d = gv - p[k].to_f64().unwrap_or(f64::NAN);
                num += d * d;
                den += gv * gv;
            }
            if den == 0.0 {
                return Err(CoreError::Metric(format!("ground truth of state {i} has zero norm")));
            }
            Ok(num.sqrt() / den.sqrt())
        })
        .collect()
}

/// Mean normalized reconstruction error over a batch.
pub fn e3d<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<f64> {
    let each = e3d_each(pred, gt)?;
    Ok(each.iter().sum::<f64>() / each.len() as f64)
}

/// Sum of absolute coordinate differences of one state.
pub fn sad<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<f64> {
    sample_views(pred, gt)?;
    Ok(pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&a, &b)| (a.to_f64().unwrap_or(f64::NAN) - b.to_f64().unwrap_or(f64::NAN)).abs())
        .sum())
}

/// Double-precision `[3, rows, cols]` tensor of a surface.
pub fn surface_tensor(s: &SurfaceState) -> Tensor<f64> {
    let (r, c) = (s.rows(), s.cols());
    let mut v = vec![0.0; 3 * r * c];
    for (k, p) in s.points().iter().enumerate() {
        for d in 0..3 {
            v[d * r * c + k] = p[d];
        }
    }
    Tensor::from_vec(&[3, r, c], v).expect("sized to fit")
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorStats {
    pub e3d_mean: f64,
    pub e3d_std: f64,
    pub count: usize,
}

impl FactorStats {
    pub fn of(xs: &[f64]) -> Self {
        let (e3d_mean, e3d_std) = mean_std(xs);
        Self { e3d_mean, e3d_std, count: xs.len() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextureStats {
    pub known: bool,
    #[serde(flatten)]
    pub stats: FactorStats,
}

/// Error of one evaluated frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameError {
    pub frame: usize,
    pub state_id: u32,
    pub texture_id: u32,
    pub illumination_id: u32,
    pub known_texture: bool,
    pub e3d: f64,
    pub sad: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    pub e3d_mean: f64,
    pub e3d_std: f64,
    /// Mean per-state sum of absolute differences, in the plate's own units.
    pub sad_mean: f64,
    pub per_texture: BTreeMap<u32, TextureStats>,
    pub per_illumination: BTreeMap<u32, FactorStats>,
    pub known_textures: Option<FactorStats>,
    pub unknown_textures: Option<FactorStats>,
    pub segmented_inputs: bool,
    pub per_frame: Vec<FrameError>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub occlusion: Option<OcclusionGrid>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing: Option<Throughput>,
}

impl EvalReport {
    pub fn from_frames(per_frame: Vec<FrameError>, segmented_inputs: bool) -> Result<Self> {
        if per_frame.is_empty() {
            return Err(CoreError::Argument("nothing to evaluate: the test split is empty".into()));
        }
        let all: Vec<f64> = per_frame.iter().map(|f| f.e3d).collect();
        let (e3d_mean, e3d_std) = mean_std(&all);
        let sad_mean = per_frame.iter().map(|f| f.sad).sum::<f64>() / per_frame.len() as f64;
        let mut by_tex: BTreeMap<u32, (bool, Vec<f64>)> = BTreeMap::new();
        let mut by_ill: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let (mut known, mut unknown) = (Vec::new(), Vec::new());
        for f in &per_frame {
            by_tex.entry(f.texture_id).or_insert((f.known_texture, Vec::new())).1.push(f.e3d);
            by_ill.entry(f.illumination_id).or_default().push(f.e3d);
            if f.known_texture { &mut known } else { &mut unknown }.push(f.e3d);
        }
        let group = |v: &[f64]| (!v.is_empty()).then(|| FactorStats::of(v));
        Ok(Self {
            frames: per_frame.len(),
            e3d_mean,
            e3d_std,
            sad_mean,
            per_texture: by_tex.into_iter().map(|(k, (kn, v))| (k, TextureStats { known: kn, stats: FactorStats::of(&v) })).collect(),
            per_illumination: by_ill.into_iter().map(|(k, v)| (k, FactorStats::of(&v))).collect(),
            known_textures: group(&known),
            unknown_textures: group(&unknown),
            segmented_inputs,
            per_frame,
            occlusion: None,
            timing: None,
        })
    }
}

/// Score predictions `[3, h, w]` (one per frame) against the dataset's surfaces.
pub fn evaluate_predictions(ds: &Dataset, frames: &[usize], preds: &[Tensor<f64>], segmented: bool) -> Result<EvalReport> {
    if frames.len() != preds.len() {
        return Err(CoreError::Argument(format!("{} frames but {} predictions", frames.len(), preds.len())));
    }
    let mut out = Vec::with_capacity(frames.len());
    for (&i, p) in frames.iter().zip(preds) {
        let f = ds.frames.get(i).ok_or_else(|| CoreError::Argument(format!("no frame {i}")))?;
        let gt = surface_tensor(&ds.states[f.state_id as usize]);
        let e = e3d_each(p, &gt).map_err(|e| match e {
            CoreError::Metric(_) => CoreError::Metric(format!("ground truth of state {} has zero norm", f.state_id)),
            e => e,
        })?[0];
        out.push(FrameError {
            frame: i,
            state_id: f.state_id,
            texture_id: f.texture_id,
            illumination_id: f.illumination_id,
            known_texture: ds.is_known_texture(f.texture_id),
            e3d: e,
            sad: sad(p, &gt)?,
        });
    }
    EvalReport::from_frames(out, segmented)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub batch_size: usize,
    /// Without a segmenter, mask renders by their footprint.
    pub mask_footprint: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { batch_size: 8, mask_footprint: false }
    }
}

/// Reconstruct prepared inputs in batches of `batch_size`, as `f64` surfaces.
pub fn reconstruct_all(rec: &mut Reconstructor, inputs: &[image::RgbImage], batch_size: usize) -> Result<Vec<Tensor<f64>>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(batch_size.max(1)) {
        let refs: Vec<_> = chunk.iter().collect();
        let y = rec.reconstruct_batch(&refs)?;
        let (n, c, h, w) = y.dims4();
        for i in 0..n {
            out.push(Tensor::from_vec(&[c, h, w], y.sample(i).iter().map(|&v| v as f64).collect())?);
        }
    }
    Ok(out)
}

/// Reconstruct and score `frames` of `ds`.
pub fn evaluate(
    rec: &mut Reconstructor,
    mut seg: Option<&mut Segmenter>,
    ds: &Dataset,
    frames: &[usize],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if frames.is_empty() {
        return Err(CoreError::Argument("nothing to evaluate: the test split is empty".into()));
    }
    let segmented = seg.is_some();
    let inputs = frames
        .iter()
        .map(|&i| {
            let f = &ds.frames[i];
            prepare_input(&f.image, &f.footprint, seg.as_deref_mut(), opts.mask_footprint)
        })
        .collect::<Result<Vec<_>>>()?;
    let preds = reconstruct_all(rec, &inputs, opts.batch_size)?;
    evaluate_predictions(ds, frames, &preds, segmented)
}

/// Mean IoU between the segmenter's object masks and the reference masks.
pub fn segmentation_iou(seg: &mut Segmenter, samples: &[crate::geometry::MaskSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(CoreError::Argument("no segmentation samples to score".into()));
    }
    let mut total = 0.0;
    for s in samples {
        total += seg.segment(&s.image)?.mask.iou(&s.mask)?;
    }
    Ok(total / samples.len() as f64)
}
