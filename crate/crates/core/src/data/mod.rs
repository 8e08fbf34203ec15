//! File formats, the synthetic four-type dataset and splitting.

mod dataset;
mod manifest;
mod split;
mod synth;
mod tensor_file;

pub use dataset::{write_synth_dataset, ClipSource, DirSource, SynthSource};
pub use manifest::{read_manifest, write_manifest, ForgeryType, ManifestRecord};
pub use split::{split, Split, PAPER_RATIOS};
pub use synth::{audio_envelope, clip_id, pearson, visual_envelope, SynthConfig};
pub use tensor_file::*;
