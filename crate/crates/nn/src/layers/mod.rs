mod activation;
mod conv;
mod linear;
mod norm;
mod pool;
mod upsample;

pub use activation::{sigmoid, LeakyRelu, Sigmoid};
pub use conv::{Conv2d, ConvTranspose2d};
pub use linear::Linear;
pub use norm::BatchNorm2d;
pub use pool::MaxPool2d;
pub use upsample::UpsampleBilinear2x;
