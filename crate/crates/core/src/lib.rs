//! Gated multi-scale image enhancement with quantization-aware training and
//! an integer-only INT8 inference engine.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] and [`tape`]: dense N·C·H·W tensors and reverse-mode autodiff.
//! - [`model`]: the three-scale gated network, written once against a
//!   [`model::Builder`] so float, fake-quant and INT8 backends share it.
//! - [`losses`] and [`metrics`]: the training objective, PSNR and SSIM.
//! - [`quant`]: observers, fake quantization with a straight-through
//!   estimator, QAT instrumentation and the integer engine.
//! - [`train`]: Adam, warmup + cosine schedule, clipping, QAT fine-tuning
//!   and evaluation.
//! - [`data`] and [`checkpoint`]: PNG I/O, patches, the synthetic pair
//!   generator and the binary checkpoint container.
//! - [`gradcheck`]: finite-difference verification of the tape gradients.
//! - [`commands`]: the command implementations behind the `gated-isp` binary.

pub mod checkpoint;
pub mod commands;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod quant;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{init_network, param_count, ModelConfig, Network};
pub use tensor::{Shape, Tensor};
