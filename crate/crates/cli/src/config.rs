use std::path::Path;

use anyhow::{bail, Context, Result};
use ismo_core::adversary::DiscriminatorConfig;
use ismo_core::evaluator::{EvalOptions, OcclusionConfig};
use ismo_core::geometry::{DatasetConfig, MaskConfig};
use ismo_core::reconstructor::{RecNetConfig, RecNetVariant};
use ismo_core::segmenter::SegmenterConfig;
use ismo_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::UsageError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: RecNetVariant,
    /// Divide every layer width by this factor.
    pub width_divisor: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { variant: RecNetVariant::Full, width_divisor: 1, seed: 0 }
    }
}

impl ModelConfig {
    pub fn recnet(&self) -> RecNetConfig {
        let d = self.width_divisor.max(1);
        let mut c = RecNetConfig::for_variant(self.variant).with_widths(|w| w / d);
        c.seed = self.seed;
        c
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ThroughputConfig {
    pub warmup: usize,
    pub iters: usize,
    pub frames: usize,
}

impl Default for ThroughputConfig {
    fn default() -> Self {
        Self { warmup: 3, iters: 10, frames: 4 }
    }
}

/// Everything a run can be configured with, one section per stage.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub masks: MaskConfig,
    pub segmenter: SegmenterConfig,
    pub model: ModelConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub occlusion: OcclusionConfig,
    pub throughput: ThroughputConfig,
}

fn merge(base: &mut Value, over: Value, path: &str) -> Result<()> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &p)?,
                    None => return Err(UsageError(format!("unknown configuration key '{p}'")).into()),
                }
            }
        }
        (slot, v) => *slot = v,
    }
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    // reuse the TOML grammar for literals: numbers, booleans, arrays, strings
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => serde_json::to_value(t.remove("v").expect("key present")).unwrap_or(Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

/// Apply one `section.key=value` override.
fn set(tree: &mut Value, assignment: &str) -> Result<()> {
    let Some((path, raw)) = assignment.split_once('=') else {
        return Err(UsageError(format!("override '{assignment}' is not of the form key=value")).into());
    };
    let mut over = parse_value(raw.trim());
    for part in path.trim().rsplit('.') {
        over = Value::Object([(part.to_string(), over)].into_iter().collect());
    }
    merge(tree, over, "")
}

impl RunConfig {
    /// Defaults, then the file, then each `--set` override.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut tree = serde_json::to_value(Self::default())?;
        if let Some(f) = file {
            let text = std::fs::read_to_string(f).with_context(|| format!("reading config {}", f.display()))?;
            let table: toml::Table =
                toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", f.display())))?;
            merge(&mut tree, serde_json::to_value(table)?, "")?;
        }
        for s in overrides {
            set(&mut tree, s)?;
        }
        let cfg: Self = serde_json::from_value(tree).map_err(|e| UsageError(format!("invalid configuration: {e}")))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// The discriminator sized for the model's output grid.
    pub fn discriminator_for(&self, grid: usize) -> DiscriminatorConfig {
        DiscriminatorConfig { grid, ..self.discriminator.clone() }
    }
}

pub fn check_grid(model: usize, data: usize) -> Result<()> {
    if model != data {
        bail!(UsageError(format!(
            "the model predicts {model}x{model} grids but the dataset stores {data}x{data}; set dataset.deformation.grid or model.variant"
        )));
    }
    Ok(())
}
