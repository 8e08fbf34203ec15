//! Clip sources: synthetic clips generated on demand, or a dataset directory.
//!
//! Directory layout:
//! ```text
//! manifest.jsonl            every record
//! train.jsonl val.jsonl test.jsonl
//! synth.json                generator settings (synthetic datasets only)
//! clips/<id>.v.sstn         visual (T, 3, H, W)
//! clips/<id>.a.sstn         audio (1, L)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::manifest::{read_manifest, write_manifest, ManifestRecord};
use super::split::{split, Split, PAPER_RATIOS};
use super::synth::SynthConfig;
use super::tensor_file::{read_tensor, write_tensor};

/// Indexed access to labelled clips.
pub trait ClipSource: Sync {
    fn records(&self) -> &[ManifestRecord];

    /// Visual (T, 3, H, W) and audio (1, L) tensors of record `i`.
    fn load(&self, i: usize) -> Result<(Tensor<f32>, Tensor<f32>)>;

    fn len(&self) -> usize {
        self.records().len()
    }

    fn is_empty(&self) -> bool {
        self.records().is_empty()
    }
}

/// Synthetic clips regenerated from their derived seeds on every load.
pub struct SynthSource {
    cfg: SynthConfig,
    records: Vec<ManifestRecord>,
}

impl SynthSource {
    pub fn new(cfg: SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let records = cfg.records();
        Ok(Self { cfg, records })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }
}

impl ClipSource for SynthSource {
    fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    fn load(&self, i: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
        Ok(self.cfg.clip(i))
    }
}

/// A dataset directory; records may come from any of its manifests.
pub struct DirSource {
    root: PathBuf,
    records: Vec<ManifestRecord>,
}

impl DirSource {
    /// Opens `root/<name>.jsonl` (`manifest`, `train`, `val` or `test`).
    pub fn open(root: impl AsRef<Path>, name: &str) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(format!("{name}.jsonl"));
        if !path.exists() {
            return Err(Error::Data(format!("no manifest {}", path.display())));
        }
        let records = read_manifest(&path)?;
        Ok(Self { root, records })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl ClipSource for DirSource {
    fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    fn load(&self, i: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let r = &self.records[i];
        let v = read_tensor(self.root.join(&r.visual_path))?;
        let a = read_tensor(self.root.join(&r.audio_path))?;
        if v.rank() != 4 || a.rank() != 2 {
            return Err(Error::Data(format!(
                "record {}: expected visual (T, C, H, W) and audio (C, L), got {:?} / {:?}",
                r.id,
                v.dims(),
                a.dims()
            )));
        }
        Ok((v, a))
    }
}

/// Writes a synthetic dataset directory with a stratified split and returns the split.
pub fn write_synth_dataset(root: impl AsRef<Path>, cfg: &SynthConfig) -> Result<Split> {
    cfg.validate()?;
    let root = root.as_ref();
    fs::create_dir_all(root.join("clips"))?;
    let records = cfg.records();
    for (i, r) in records.iter().enumerate() {
        let (v, a) = cfg.clip(i);
        write_tensor(root.join(&r.visual_path), &v)?;
        write_tensor(root.join(&r.audio_path), &a)?;
    }
    write_manifest(root.join("manifest.jsonl"), &records)?;
    let sp = split(&records, PAPER_RATIOS, cfg.seed)?;
    for (name, idx) in [("train", &sp.train), ("val", &sp.val), ("test", &sp.test)] {
        let subset: Vec<ManifestRecord> = idx.iter().map(|&i| records[i].clone()).collect();
        write_manifest(root.join(format!("{name}.jsonl")), &subset)?;
    }
    fs::write(root.join("synth.json"), serde_json::to_string_pretty(cfg)?)?;
    Ok(sp)
}
