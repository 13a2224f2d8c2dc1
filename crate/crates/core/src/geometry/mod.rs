//! Synthetic thin-plate states, their renderings and the mask dataset.

mod dataset;
mod deform;
mod masks;
mod render;
mod surface;

pub use dataset::{
    generate_dataset, load_gray, load_mask_dataset, load_rgb, read_manifest, render_schedule, split_states,
    write_mask_dataset, Dataset, DatasetConfig, DatasetManifest, FrameEntry, FrameKey, MaskEntry, MaskManifest,
    Split, SplitProtocol, StateEntry,
};
pub use deform::{deform_state, generate_states, state_params, DeformationConfig, DeformationParams, Wave};
pub use masks::{build_mask_dataset, composite, procedural_backgrounds, MaskConfig, MaskSample};
pub use render::{Camera, Light, RenderConfig, RenderedFrame, Scene, TextureKind, TextureSpec};
pub use surface::{EdgeAudit, SurfaceState, DEFAULT_GRID};
