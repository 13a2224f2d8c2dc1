use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ismo_core::adversary::Discriminator;
use ismo_core::config::config_hash;
use ismo_core::evaluator::{self, plot};
use ismo_core::geometry::{
    build_mask_dataset, generate_dataset, load_mask_dataset, load_rgb, procedural_backgrounds, write_mask_dataset, Dataset,
    SurfaceState,
};
use ismo_core::reconstructor::{RecNet, Reconstructor};
use ismo_core::segmenter::Segmenter;
use ismo_core::trainer::{holdout_split, train_odnet, AdversarialTrainer, RecSamples};
use ismo_core::CoreError;
use ismo_nn::Checkpoint;
use serde::Serialize;
use serde_json::json;

use crate::config::{check_grid, RunConfig};
use crate::{ConfigArgs, UsageError};

const MASK_BACKGROUNDS: usize = 12;

fn resolve(args: &ConfigArgs) -> Result<RunConfig> {
    RunConfig::resolve(args.config.as_deref(), &args.overrides)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| CoreError::io(path, e))?;
    Ok(())
}

/// Resolved configuration and its hash, written next to every run's outputs.
fn write_run(dir: &Path, command: &str, cfg: &RunConfig, inputs: serde_json::Value) -> Result<()> {
    let record = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": config_hash(cfg),
        "inputs": inputs,
        "config": cfg,
    });
    write_json(&dir.join(format!("run-{command}.json")), &record)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn load_segmenter(path: &Path) -> Result<Segmenter> {
    Ok(Segmenter::from_checkpoint(&load_checkpoint(path)?)?)
}

fn load_reconstructor(path: &Path) -> Result<Reconstructor> {
    Ok(Reconstructor::from_checkpoint(&load_checkpoint(path)?)?)
}

fn check_input_size(expected: usize, w: u32, h: u32, what: &str) -> Result<()> {
    if (w as usize, h as usize) != (expected, expected) {
        return Err(UsageError(format!("{what} expects {expected}x{expected} images, got {w}x{h}")).into());
    }
    Ok(())
}

pub fn dataset_gen(out: &Path, args: &ConfigArgs) -> Result<()> {
    let cfg = resolve(args)?;
    create_dir(out)?;
    let ds = generate_dataset(&cfg.dataset)?;
    let manifest = ds.write(out)?;
    log::info!(
        "wrote {} states and {} frames to {} (train {}, test {})",
        ds.states.len(),
        ds.frames.len(),
        out.display(),
        ds.split.train.len(),
        ds.split.test.len()
    );
    write_run(out, "dataset-gen", &cfg, json!({ "manifest_hash": manifest.config_hash }))
}

/// Every image in `dir`, in file-name order.
fn load_backgrounds(dir: &Path) -> Result<Vec<image::RgbImage>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CoreError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(UsageError(format!("no png or jpeg images in {}", dir.display())).into());
    }
    paths.iter().map(|p| Ok(load_rgb(p)?)).collect()
}

pub fn dataset_masks(data: &Path, backgrounds: Option<&Path>, out: &Path, args: &ConfigArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let ds = Dataset::load(data)?;
    create_dir(out)?;
    let frames: Vec<_> = ds.train_frames().into_iter().map(|i| ds.frames[i].clone()).collect();
    let (w, h) = (ds.scene.config.width, ds.scene.config.height);
    let bgs = match backgrounds {
        Some(dir) => load_backgrounds(dir)?,
        None => procedural_backgrounds(MASK_BACKGROUNDS, w, h, cfg.masks.seed),
    };
    let samples = build_mask_dataset(&frames, &bgs, &cfg.masks)?;
    write_mask_dataset(&samples, &cfg.masks, out)?;
    log::info!("wrote {} image/mask pairs to {}", samples.len(), out.display());
    write_run(out, "dataset-masks", &cfg, json!({ "data": data, "backgrounds": backgrounds }))
}

pub fn train_od(data: &Path, out: &Path, args: &ConfigArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let samples = load_mask_dataset(data)?;
    create_dir(out)?;
    let mut seg = Segmenter::new(cfg.segmenter.clone())?;
    if let Some(s) = samples.first() {
        check_input_size(cfg.segmenter.input_size, s.image.width(), s.image.height(), "the segmenter")?;
    }
    let (train, held) = holdout_split(samples.len(), 0.2);
    let history = train_odnet(&mut seg, &samples[train.clone()], &cfg.train)?;
    seg.checkpoint().save(&out.join("odnet.ckpt"))?;
    let mut csv = String::from("epoch,mse\n");
    for e in &history {
        writeln!(csv, "{},{:.9}", e.epoch, e.mse)?;
    }
    let path = out.join("od_history.csv");
    std::fs::write(&path, csv).map_err(|e| CoreError::io(&path, e))?;
    let iou = if held.is_empty() { None } else { Some(evaluator::segmentation_iou(&mut seg, &samples[held.clone()])?) };
    if let Some(v) = iou {
        log::info!("held-out mean IoU {v:.4} over {} samples", held.len());
    }
    write_json(&out.join("od_metrics.json"), &json!({ "train_samples": train.len(), "heldout_samples": held.len(), "heldout_iou": iou }))?;
    write_run(out, "train-od", &cfg, json!({ "data": data }))
}

pub fn train_rec(data: &Path, out: &Path, segmenter: Option<&Path>, args: &ConfigArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let ds = Dataset::load(data)?;
    let rc = cfg.model.recnet();
    let grid = rc.output_grid()?;
    check_grid(grid, ds.states[0].rows())?;
    check_input_size(rc.input_size, ds.scene.config.width, ds.scene.config.height, "the generator")?;
    create_dir(out)?;
    let mut seg = segmenter.map(load_segmenter).transpose()?;
    let samples = RecSamples::from_dataset(&ds, &ds.train_frames(), seg.as_mut(), cfg.train.masked_inputs)?;
    log::info!("training on {} frames", samples.len());
    let g = RecNet::new(&rc)?;
    let d = Discriminator::new(&cfg.discriminator_for(grid))?;
    let mut trainer = AdversarialTrainer::new(g, d, cfg.train.clone())?;
    match trainer.train(&samples, Some(out)) {
        Ok(history) => {
            trainer.save(out, "")?;
            let series: Vec<Vec<f64>> = vec![
                history.iter().map(|e| e.losses.l3d).collect(),
                history.iter().map(|e| e.losses.liso).collect(),
                history.iter().map(|e| e.losses.lg).collect(),
                history.iter().map(|e| e.losses.ld).collect(),
            ];
            plot::save(&plot::line_chart(&series, 640, 400), &out.join("losses.png"))?;
        }
        Err(e) => {
            trainer.save(out, "_last_good")?;
            return Err(e.into());
        }
    }
    write_run(out, "train-rec", &cfg, json!({ "data": data, "segmenter": segmenter }))
}

pub fn segment(weights: &Path, input: &Path, out: &Path) -> Result<()> {
    let mut seg = load_segmenter(weights)?;
    let img = load_rgb(input)?;
    check_input_size(seg.config.input_size, img.width(), img.height(), "the segmenter")?;
    let s = seg.segment(&img)?;
    create_dir(out)?;
    let save = |name: &str, r: std::result::Result<(), image::ImageError>| -> Result<()> {
        r.map_err(|e| CoreError::Image { path: out.join(name), source: e })?;
        Ok(())
    };
    save("confidence.png", s.confidence.to_image().save(out.join("confidence.png")))?;
    save("mask.png", s.mask.to_image().save(out.join("mask.png")))?;
    save("segmented.png", s.segmented.save(out.join("segmented.png")))?;
    if s.fallback {
        log::warn!("no object found; segmented.png is the input image");
    }
    Ok(())
}

fn write_obj(s: &SurfaceState, path: &Path) -> Result<()> {
    let mut text = String::new();
    for p in s.points() {
        writeln!(text, "v {:.6} {:.6} {:.6}", p[0], p[1], p[2])?;
    }
    let c = s.cols();
    for r in 0..s.rows() - 1 {
        for k in 0..c - 1 {
            let a = r * c + k + 1;
            writeln!(text, "f {} {} {}", a, a + 1, a + c)?;
            writeln!(text, "f {} {} {}", a + 1, a + c + 1, a + c)?;
        }
    }
    std::fs::write(path, text).map_err(|e| CoreError::io(path, e))?;
    Ok(())
}

pub fn reconstruct(weights: &Path, segmenter: Option<&Path>, input: &Path, out: &Path) -> Result<()> {
    let mut rec = load_reconstructor(weights)?;
    let mut img = load_rgb(input)?;
    check_input_size(rec.config().input_size, img.width(), img.height(), "the generator")?;
    if let Some(p) = segmenter {
        let s = load_segmenter(p)?.segment(&img)?;
        if s.fallback {
            log::warn!("no object found; reconstructing from the unsegmented image");
        }
        img = s.segmented;
    }
    let surface = rec.reconstruct(&img)?;
    if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj")) {
        write_obj(&surface, out)
    } else {
        Ok(surface.save(out)?)
    }
}

pub struct EvalFlags {
    pub occlusion: bool,
    pub throughput: bool,
    pub plots: Option<PathBuf>,
}

pub fn eval(
    weights: &Path,
    data: &Path,
    report_path: &Path,
    segmenter: Option<&Path>,
    flags: &EvalFlags,
    args: &ConfigArgs,
) -> Result<()> {
    let cfg = resolve(args)?;
    let ds = Dataset::load(data)?;
    let mut rec = load_reconstructor(weights)?;
    check_grid(rec.config().output_grid()?, ds.states[0].rows())?;
    check_input_size(rec.config().input_size, ds.scene.config.width, ds.scene.config.height, "the generator")?;
    let mut seg = segmenter.map(load_segmenter).transpose()?;
    let frames = ds.test_frames();
    let mut report = evaluator::evaluate(&mut rec, seg.as_mut(), &ds, &frames, &cfg.eval)?;
    log::info!("e3d {:.4} +- {:.4} over {} frames", report.e3d_mean, report.e3d_std, report.frames);
    if flags.occlusion {
        let base = evaluator::occlusion_frames(&ds, cfg.occlusion.base_frames, cfg.occlusion.seed)?;
        report.occlusion = Some(evaluator::occlusion_sweep(&mut rec, seg.as_mut(), &ds, &base, &cfg.occlusion)?);
    }
    if flags.throughput {
        let mut timing_seg = match seg.take() {
            Some(s) => s,
            None => {
                log::info!("no segmenter given; timing an untrained one of the configured size");
                let size = ds.scene.config.width as usize;
                Segmenter::new(ismo_core::segmenter::SegmenterConfig { input_size: size, ..cfg.segmenter.clone() })?
            }
        };
        let imgs: Vec<_> = frames.iter().take(cfg.throughput.frames.max(1)).map(|&i| ds.frames[i].image.clone()).collect();
        let t = evaluator::measure_throughput(&mut rec, &mut timing_seg, &imgs, cfg.throughput.warmup, cfg.throughput.iters)?;
        log::info!(
            "full pipeline {:.1} ms/frame ({:.1} fps), reconstruction {:.1} ms/frame",
            t.full_pipeline.mean * 1e3,
            t.full_pipeline.fps,
            t.reconstruct_only.mean * 1e3
        );
        report.timing = Some(t);
    }
    let dir = report_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    create_dir(dir)?;
    write_json(report_path, &report)?;
    if let Some(pd) = &flags.plots {
        create_dir(pd)?;
        let errs: Vec<f64> = report.per_frame.iter().map(|f| f.e3d).collect();
        plot::save(&plot::histogram(&errs, 20, 640, 400), &pd.join("e3d_histogram.png"))?;
        if let Some(o) = &report.occlusion {
            plot::save(&plot::heatmap(&o.e3d, 48), &pd.join("occlusion_heatmap.png"))?;
        }
    }
    write_run(dir, "eval", &cfg, json!({ "weights": weights, "data": data, "segmenter": segmenter }))
}
