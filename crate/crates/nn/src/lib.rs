//! Small CPU neural-network toolkit: NCHW tensors, convolution, batch
//! normalization, pooling and bilinear upsampling layers with hand-written
//! backward passes, an Adam optimizer and a named-tensor checkpoint format.
//!
//! Every layer is generic over [`Scalar`] so the same code runs in `f32`
//! for training and in `f64` for finite-difference gradient checks.

pub mod checkpoint;
mod error;
pub mod im2col;
pub mod init;
pub mod layers;
mod module;
pub mod optim;
mod scalar;
mod tensor;

pub use checkpoint::Checkpoint;
pub use error::NnError;
pub use module::{join, Mode, Module, ModuleExt, Param, ParamKind, Sequential};
pub use optim::{Adam, AdamConfig};
pub use scalar::{gemm, Scalar};
pub use tensor::Tensor;
