//! Writes a few renders and a mask composite to the given directory.

use std::path::PathBuf;

use ismo_core::geometry::{
    build_mask_dataset, generate_dataset, procedural_backgrounds, DatasetConfig, MaskConfig,
};

fn main() -> anyhow::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "preview".into()));
    std::fs::create_dir_all(&out)?;
    let cfg = DatasetConfig { states: 60, ..DatasetConfig::default() };
    let ds = generate_dataset(&cfg)?;
    for f in ds.frames.iter().filter(|f| f.state_id % 20 == 19) {
        f.image.save(out.join(format!("s{}_t{}_l{}_c{}.png", f.state_id, f.texture_id, f.illumination_id, f.camera_id)))?;
    }
    let bgs = procedural_backgrounds(3, 224, 224, 1);
    let samples = build_mask_dataset(&ds.frames, &bgs, &MaskConfig { count: 6, ..Default::default() })?;
    for (i, s) in samples.iter().enumerate() {
        s.image.save(out.join(format!("mask_sample_{i}.png")))?;
    }
    Ok(())
}
