//! Thin-plate reconstruction pipeline: synthetic data, segmentation,
//! surface regression with an adversarial regularizer, and evaluation.

pub mod adversary;
pub mod config;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod losses;
pub mod raster;
pub mod reconstructor;
pub mod segmenter;
pub mod trainer;

pub use error::{CoreError, Result};
