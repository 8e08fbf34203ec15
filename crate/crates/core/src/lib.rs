//! Single-stream audio-visual deepfake detection.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense tensors, a tape-based reverse-mode autodiff engine and
//!   a finite-difference gradient checker.
//! * [`model`]: the pyramid backbone of stacked collaborative audio-visual
//!   blocks (frame-wise spatial attention followed by joint audio-visual
//!   self-attention) and the classification heads.
//! * [`objective`]: style statistics, style shuffle, latent shuffle and the
//!   classification, adversarial and contrast losses.
//! * [`train`]: AdamW, the learning-rate schedule, input augmentation, the
//!   training loop and ACC/AUC evaluation.
//! * [`data`]: tensor and manifest file formats, the synthetic four-type
//!   deepfake generator and stratified splitting.

pub mod checks;
pub mod data;
pub mod error;
pub mod model;
pub mod objective;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
