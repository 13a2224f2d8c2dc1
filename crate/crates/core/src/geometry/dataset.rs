//! Dataset assembly, the train/test split and the on-disk layout.
//!
//! ```text
//! DIR/manifest.json
//! DIR/surfaces/state_00012.f32      little-endian f32, rows x cols x 3
//! DIR/images/s00012_t1_l0_c1.png
//! DIR/footprints/s00012_t1_l0_c1.png
//! ```

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::deform::{generate_states, state_params, DeformationConfig, DeformationParams};
use super::masks::MaskSample;
use super::render::{RenderConfig, RenderedFrame, Scene};
use super::surface::SurfaceState;
use crate::config::config_hash;
use crate::error::{CoreError, Result};
use crate::raster::BinaryMask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitProtocol {
    /// Last 20 states of every block of 100 are held out.
    #[default]
    Blocked,
    /// Last fifth of the states are held out.
    Proportional,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_states(m: usize, protocol: SplitProtocol) -> Result<Split> {
    if m < 5 {
        return Err(CoreError::Split(format!("need at least 5 states to split, got {m}")));
    }
    let is_test: Box<dyn Fn(usize) -> bool> = match protocol {
        SplitProtocol::Blocked if m >= 100 => Box::new(|i| i % 100 >= 80),
        _ => {
            let n_test = ((m as f64 * 0.2).round() as usize).max(1);
            Box::new(move |i| i >= m - n_test)
        }
    };
    let (test, train): (Vec<usize>, Vec<usize>) = (0..m).partition(|&i| is_test(i));
    Ok(Split { train, test })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameKey {
    pub state_id: u32,
    pub texture_id: u32,
    pub illumination_id: u32,
    pub camera_id: u32,
}

impl FrameKey {
    pub fn file_stem(&self) -> String {
        format!("s{:05}_t{}_l{}_c{}", self.state_id, self.texture_id, self.illumination_id, self.camera_id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub states: usize,
    pub textures: usize,
    pub lights: usize,
    pub cameras: usize,
    /// Renderings per state; `None` renders every texture/light/camera combination.
    pub renders_per_state: Option<usize>,
    pub unknown_texture: Option<u32>,
    pub seed: u64,
    pub protocol: SplitProtocol,
    pub deformation: DeformationConfig,
    pub render: RenderConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            states: 200,
            textures: 4,
            lights: 4,
            cameras: 2,
            renders_per_state: Some(4),
            unknown_texture: Some(3),
            seed: 0,
            protocol: SplitProtocol::Blocked,
            deformation: DeformationConfig::default(),
            render: RenderConfig::default(),
        }
    }
}

/// Which (texture, light, camera) combinations each state is rendered with.
///
/// With `n` renders per state, rendering `k` of state `m` uses texture
/// `k % T`, light `(k + m) % L` and camera `(k + m / L) % C`, so every state
/// sees each texture while lights and cameras rotate across states.
pub fn render_schedule(cfg: &DatasetConfig) -> Vec<FrameKey> {
    let (t, l, c) = (cfg.textures as u32, cfg.lights as u32, cfg.cameras as u32);
    let mut keys = Vec::new();
    for m in 0..cfg.states as u32 {
        match cfg.renders_per_state {
            None => {
                for ti in 0..t {
                    for li in 0..l {
                        for ci in 0..c {
                            keys.push(FrameKey { state_id: m, texture_id: ti, illumination_id: li, camera_id: ci });
                        }
                    }
                }
            }
            Some(n) => {
                for k in 0..n as u32 {
                    keys.push(FrameKey {
                        state_id: m,
                        texture_id: k % t,
                        illumination_id: (k + m) % l,
                        camera_id: (k + m / l) % c,
                    });
                }
            }
        }
    }
    keys
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateEntry {
    pub id: u32,
    pub file: String,
    pub params: DeformationParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    #[serde(flatten)]
    pub key: FrameKey,
    pub image: String,
    pub footprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config_hash: String,
    pub config: DatasetConfig,
    pub num_states: usize,
    pub renders_per_state: Option<usize>,
    pub grid: [usize; 2],
    pub image_size: [u32; 2],
    pub scene: Scene,
    pub split_protocol: SplitProtocol,
    pub split: Split,
    pub states: Vec<StateEntry>,
    pub frames: Vec<FrameEntry>,
}

impl DatasetManifest {
    pub fn split_dataset(&self, protocol: SplitProtocol) -> Result<Split> {
        split_states(self.num_states, protocol)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub scene: Scene,
    pub states: Vec<SurfaceState>,
    pub params: Vec<DeformationParams>,
    pub frames: Vec<RenderedFrame>,
    pub split: Split,
}

pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    let scene = Scene::standard(cfg.render.clone(), cfg.textures, cfg.lights, cfg.cameras, cfg.unknown_texture)?;
    // stored as f32 on disk; quantize now so a reloaded dataset is identical
    let states = generate_states(cfg.states, &cfg.deformation, cfg.seed)?
        .into_iter()
        .map(|s| SurfaceState::from_f32_bytes(s.state_id, s.rows(), s.cols(), &s.to_f32_bytes()))
        .collect::<Result<Vec<_>>>()?;
    let params = state_params(cfg.states, &cfg.deformation, cfg.seed)?;
    let split = split_states(cfg.states, cfg.protocol)?;
    let frames = render_schedule(cfg)
        .iter()
        .map(|k| scene.render(&states[k.state_id as usize], k.texture_id, k.illumination_id, k.camera_id))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { config: cfg.clone(), scene, states, params, frames, split })
}

fn state_file(id: u32) -> String {
    format!("surfaces/state_{id:05}.f32")
}

fn key_of(f: &RenderedFrame) -> FrameKey {
    FrameKey {
        state_id: f.state_id,
        texture_id: f.texture_id,
        illumination_id: f.illumination_id,
        camera_id: f.camera_id,
    }
}

fn save_png<P: image::PixelWithColorType>(img: &image::ImageBuffer<P, Vec<u8>>, path: &Path) -> Result<()>
where
    [P::Subpixel]: image::EncodableLayout,
    P: image::Pixel<Subpixel = u8>,
{
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| CoreError::Image { path: path.to_path_buf(), source })
}

fn create_dirs(root: &Path, subdirs: &[&str]) -> Result<()> {
    for d in subdirs {
        let p = root.join(d);
        std::fs::create_dir_all(&p).map_err(|e| CoreError::io(&p, e))?;
    }
    Ok(())
}

impl Dataset {
    pub fn manifest(&self) -> DatasetManifest {
        let (rows, cols) = self.states.first().map_or((0, 0), |s| (s.rows(), s.cols()));
        DatasetManifest {
            config_hash: config_hash(&self.config),
            config: self.config.clone(),
            num_states: self.states.len(),
            renders_per_state: self.config.renders_per_state,
            grid: [rows, cols],
            image_size: [self.scene.config.width, self.scene.config.height],
            scene: self.scene.clone(),
            split_protocol: self.config.protocol,
            split: self.split.clone(),
            states: self
                .states
                .iter()
                .zip(&self.params)
                .map(|(s, p)| StateEntry { id: s.state_id, file: state_file(s.state_id), params: p.clone() })
                .collect(),
            frames: self
                .frames
                .iter()
                .map(|f| {
                    let key = key_of(f);
                    let stem = key.file_stem();
                    FrameEntry { key, image: format!("images/{stem}.png"), footprint: format!("footprints/{stem}.png") }
                })
                .collect(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<DatasetManifest> {
        create_dirs(dir, &["surfaces", "images", "footprints"])?;
        let manifest = self.manifest();
        for (s, e) in self.states.iter().zip(&manifest.states) {
            s.save(&dir.join(&e.file))?;
        }
        for (f, e) in self.frames.iter().zip(&manifest.frames) {
            save_png(&f.image, &dir.join(&e.image))?;
            save_png(&f.footprint.to_image(), &dir.join(&e.footprint))?;
        }
        let path = dir.join("manifest.json");
        std::fs::write(&path, manifest.to_json()).map_err(|e| CoreError::io(&path, e))?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        let mut missing: Vec<PathBuf> = Vec::new();
        for p in manifest.states.iter().map(|s| &s.file).chain(manifest.frames.iter().flat_map(|f| [&f.image, &f.footprint])) {
            let full = dir.join(p);
            if !full.is_file() {
                missing.push(full);
            }
        }
        if !missing.is_empty() {
            return Err(CoreError::MissingFiles(missing));
        }
        let [rows, cols] = manifest.grid;
        let states = manifest
            .states
            .iter()
            .map(|e| SurfaceState::load(&dir.join(&e.file), e.id, rows, cols))
            .collect::<Result<Vec<_>>>()?;
        let frames = manifest
            .frames
            .iter()
            .map(|e| {
                let image = load_rgb(&dir.join(&e.image))?;
                let footprint = BinaryMask::from_image(&load_gray(&dir.join(&e.footprint))?);
                Ok(RenderedFrame {
                    image,
                    footprint,
                    state_id: e.key.state_id,
                    texture_id: e.key.texture_id,
                    illumination_id: e.key.illumination_id,
                    camera_id: e.key.camera_id,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: manifest.config,
            scene: manifest.scene,
            params: manifest.states.into_iter().map(|s| s.params).collect(),
            states,
            frames,
            split: manifest.split,
        })
    }

    pub fn is_known_texture(&self, texture_id: u32) -> bool {
        self.scene.textures.get(texture_id as usize).is_some_and(|t| t.known)
    }

    /// Indices of frames whose state is in `states`.
    pub fn frames_of(&self, states: &[usize], known_textures_only: bool) -> Vec<usize> {
        let mut wanted = vec![false; self.states.len()];
        for &s in states {
            wanted[s] = true;
        }
        (0..self.frames.len())
            .filter(|&i| {
                let f = &self.frames[i];
                wanted[f.state_id as usize] && (!known_textures_only || self.is_known_texture(f.texture_id))
            })
            .collect()
    }

    pub fn train_frames(&self) -> Vec<usize> {
        self.frames_of(&self.split.train, true)
    }

    pub fn test_frames(&self) -> Vec<usize> {
        self.frames_of(&self.split.test, false)
    }
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    if !path.is_file() {
        return Err(CoreError::MissingFiles(vec![path.to_path_buf()]));
    }
    Ok(image::open(path).map_err(|source| CoreError::Image { path: path.to_path_buf(), source })?.to_rgb8())
}

pub fn load_gray(path: &Path) -> Result<image::GrayImage> {
    if !path.is_file() {
        return Err(CoreError::MissingFiles(vec![path.to_path_buf()]));
    }
    Ok(image::open(path).map_err(|source| CoreError::Image { path: path.to_path_buf(), source })?.to_luma8())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskManifest {
    pub config_hash: String,
    pub config: super::masks::MaskConfig,
    pub samples: Vec<MaskEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub image: String,
    pub mask: String,
    pub frame_index: usize,
    pub background_index: usize,
    pub shift: (i32, i32),
}

pub fn write_mask_dataset(samples: &[MaskSample], cfg: &super::masks::MaskConfig, dir: &Path) -> Result<MaskManifest> {
    create_dirs(dir, &["images", "masks"])?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let e = MaskEntry {
            image: format!("images/{i:05}.png"),
            mask: format!("masks/{i:05}.png"),
            frame_index: s.frame_index,
            background_index: s.background_index,
            shift: s.shift,
        };
        save_png(&s.image, &dir.join(&e.image))?;
        save_png(&s.mask.to_image(), &dir.join(&e.mask))?;
        entries.push(e);
    }
    let manifest = MaskManifest { config_hash: config_hash(cfg), config: cfg.clone(), samples: entries };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("serializes"))
        .map_err(|e| CoreError::io(&path, e))?;
    Ok(manifest)
}

pub fn load_mask_dataset(dir: &Path) -> Result<Vec<MaskSample>> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
    let manifest: MaskManifest =
        serde_json::from_str(&text).map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))?;
    manifest
        .samples
        .iter()
        .map(|e| {
            Ok(MaskSample {
                image: load_rgb(&dir.join(&e.image))?,
                mask: BinaryMask::from_image(&load_gray(&dir.join(&e.mask))?),
                frame_index: e.frame_index,
                background_index: e.background_index,
                shift: e.shift,
            })
        })
        .collect()
}
