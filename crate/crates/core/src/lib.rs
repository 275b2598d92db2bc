pub mod augment;
pub mod csi;
pub mod dsp;
pub mod error;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Model64 = model::Model<f64>;
pub type Model32 = model::Model<f32>;
pub type Sample64 = dsp::PreprocessedSample<f64>;
pub type Sample32 = dsp::PreprocessedSample<f32>;
