//! JSON-lines manifest binding clip files to forgery types.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::LabelTriple;

/// The four audio-visual forgery types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ForgeryType {
    #[serde(rename = "FakeV-FakeA")]
    FakeVFakeA,
    #[serde(rename = "FakeV-RealA")]
    FakeVRealA,
    #[serde(rename = "RealV-FakeA")]
    RealVFakeA,
    #[serde(rename = "RealV-RealA")]
    RealVRealA,
}

impl ForgeryType {
    pub const ALL: [ForgeryType; 4] = [
        ForgeryType::FakeVFakeA,
        ForgeryType::FakeVRealA,
        ForgeryType::RealVFakeA,
        ForgeryType::RealVRealA,
    ];

    pub fn labels(self) -> LabelTriple {
        match self {
            ForgeryType::FakeVFakeA => LabelTriple::new(false, false),
            ForgeryType::FakeVRealA => LabelTriple::new(false, true),
            ForgeryType::RealVFakeA => LabelTriple::new(true, false),
            ForgeryType::RealVRealA => LabelTriple::new(true, true),
        }
    }

    pub fn from_labels(l: LabelTriple) -> Self {
        match (l.visual, l.audio) {
            (false, false) => ForgeryType::FakeVFakeA,
            (false, true) => ForgeryType::FakeVRealA,
            (true, false) => ForgeryType::RealVFakeA,
            (true, true) => ForgeryType::RealVRealA,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ForgeryType::FakeVFakeA => "FakeV-FakeA",
            ForgeryType::FakeVRealA => "FakeV-RealA",
            ForgeryType::RealVFakeA => "RealV-FakeA",
            ForgeryType::RealVRealA => "RealV-RealA",
        }
    }
}

impl fmt::Display for ForgeryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ForgeryType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Data(format!("unknown forgery type {s:?}")))
    }
}

/// One clip. Labels are 1 for real, 0 for fake; the whole-video label is derived.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub visual_path: String,
    pub audio_path: String,
    pub y_v: u8,
    pub y_a: u8,
    pub forgery_type: ForgeryType,
}

impl ManifestRecord {
    pub fn new(
        id: impl Into<String>,
        visual_path: impl Into<String>,
        audio_path: impl Into<String>,
        t: ForgeryType,
    ) -> Self {
        let l = t.labels();
        Self {
            id: id.into(),
            visual_path: visual_path.into(),
            audio_path: audio_path.into(),
            y_v: l.visual as u8,
            y_a: l.audio as u8,
            forgery_type: t,
        }
    }

    pub fn labels(&self) -> LabelTriple {
        LabelTriple::new(self.y_v == 1, self.y_a == 1)
    }

    pub fn y_w(&self) -> u8 {
        self.labels().whole() as u8
    }

    /// Labels must be 0/1 and agree with the forgery type.
    pub fn validate(&self) -> Result<()> {
        if self.y_v > 1 || self.y_a > 1 {
            return Err(Error::Data(format!("record {}: labels must be 0 or 1", self.id)));
        }
        if self.forgery_type.labels() != self.labels() {
            return Err(Error::Data(format!(
                "record {}: labels (y_v={}, y_a={}) contradict type {}",
                self.id, self.y_v, self.y_a, self.forgery_type
            )));
        }
        Ok(())
    }
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        r.validate()?;
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: ManifestRecord =
            serde_json::from_str(&line).map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        r.validate()?;
        records.push(r);
    }
    Ok(records)
}
