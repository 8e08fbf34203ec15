//! Checkpoint layout:
//!
//! ```text
//! "SSCK" | version u16 | config length u32 | config JSON | parameter count u32
//! then per parameter: name length u16 | UTF-8 name | tensor record ("SSTN" format)
//! ```

use std::fs;
use std::path::Path;

use crate::data::{decode_tensor, encode_tensor};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

use super::config::ModelConfig;
use super::detector::Detector;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSCK";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn write_checkpoint<S: Scalar>(model: &Detector<S>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(model.config())?;
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for (name, t) in model.params().iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        encode_tensor(t, &mut out)?;
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    if bytes.len() < *pos + n {
        return Err(Error::Format("truncated checkpoint".into()));
    }
    let s = &bytes[*pos..*pos + n];
    *pos += n;
    Ok(s)
}

/// Decodes a checkpoint. With `expected`, a differing stored config is an error.
pub fn read_checkpoint<S: Scalar>(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<Detector<S>> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = u16::from_le_bytes(take(bytes, &mut pos, 2)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let n = u32::from_le_bytes(take(bytes, &mut pos, 4)?.try_into().unwrap()) as usize;
    let cfg: ModelConfig = serde_json::from_slice(take(bytes, &mut pos, n)?)?;
    if let Some(exp) = expected {
        if exp != &cfg {
            return Err(Error::Format(
                "checkpoint was written for a different model configuration".into(),
            ));
        }
    }
    let mut model = Detector::<S>::zeroed(cfg)?;
    let count = u32::from_le_bytes(take(bytes, &mut pos, 4)?.try_into().unwrap()) as usize;
    if count != model.params().len() {
        return Err(Error::Format(format!(
            "checkpoint holds {count} tensors, model has {}",
            model.params().len()
        )));
    }
    for _ in 0..count {
        let len = u16::from_le_bytes(take(bytes, &mut pos, 2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(bytes, &mut pos, len)?)
            .map_err(|e| Error::Format(e.to_string()))?
            .to_string();
        let t = decode_tensor(bytes, &mut pos)?.into_scalar::<S>();
        model.params_mut().set(&name, t)?;
    }
    if pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(model)
}

pub fn save_checkpoint<S: Scalar>(path: impl AsRef<Path>, model: &Detector<S>) -> Result<()> {
    fs::write(path, write_checkpoint(model)?)?;
    Ok(())
}

pub fn load_checkpoint<S: Scalar>(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<Detector<S>> {
    read_checkpoint(&fs::read(path)?, expected)
}
