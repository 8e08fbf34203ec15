//! The detector backbone, its building blocks and the classification heads.

mod checkpoint;
mod config;
mod count;
mod detector;
mod heads;
mod layers;
mod params;
pub mod saavm;
pub mod vpm;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::*;
pub use count::{component_of, count_params, ParamCount};
pub use detector::{Architecture, CavlBlock, Detector, Prediction, Stage};
pub use heads::{prob_real, AudioHead, ClassifierOutput, Heads, VisualHead, REAL_CLASS};
pub use layers::{Conv1d, Conv2d, DepthwiseConv1d, DepthwiseConv2d, Linear};
pub use params::{Bound, ParamBuilder, ParamId, ParamStore};
pub use saavm::Saavm;
pub use vpm::Vpm;
