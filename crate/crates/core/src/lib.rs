//! Adversarial shape learning for binary building segmentation.
//!
//! * [`autodiff`]: a small reverse-mode engine with standard, dilated and
//!   deformable convolutions, resampling, normalisation and losses.
//! * [`model`]: the encoder-decoder segmenter, its shape regularizer and the
//!   shape discriminator.
//! * [`train`]: the alternating adversarial training loop and checkpoints.
//! * [`metrics`]: pixel metrics and object-based geometric metrics.
//! * [`synth`]: a deterministic generator of building-like scenes.
//! * [`eval`]: batched inference and dataset-level evaluation.

pub mod autodiff;
pub mod config;
pub mod eval;
pub mod error;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
