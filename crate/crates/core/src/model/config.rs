use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::conv_out_extent;

pub const VISUAL_STEM_KERNEL: usize = 7;
pub const VISUAL_STEM_PAD: usize = 3;
pub const AUDIO_STEM_KERNEL: usize = 25;
pub const AUDIO_STEM_PAD: usize = 12;
pub const VISUAL_DOWN_KERNEL: usize = 3;
pub const VISUAL_DOWN_PAD: usize = 1;
pub const AUDIO_DOWN_KERNEL: usize = 5;
pub const AUDIO_DOWN_PAD: usize = 2;
pub const DOWN_STRIDE: usize = 2;

/// Every architectural hyperparameter of the detector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Frames per clip (T).
    pub frames: usize,
    pub visual_channels: usize,
    pub height: usize,
    pub width: usize,
    pub audio_channels: usize,
    /// Audio samples per clip (L).
    pub audio_len: usize,
    pub stage_depths: Vec<usize>,
    pub stage_channels: Vec<usize>,
    /// Channel width inside the audio-visual attention (C_m).
    pub attn_channels: usize,
    /// Visual window edge (t).
    pub window: usize,
    pub visual_stem_stride: usize,
    pub audio_stem_stride: usize,
    /// Hidden expansion of the channel MLP in the visual preprocessing module.
    pub mlp_ratio: usize,
}

/// Derived extents of one fusion stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub audio_len: usize,
    /// Windows per frame (N).
    pub windows: usize,
    /// Token length t²·C_m.
    pub token_dim: usize,
    pub depth: usize,
}

impl StageShape {
    pub fn visual_tokens(&self, frames: usize) -> usize {
        frames * self.windows
    }

    pub fn total_tokens(&self, frames: usize) -> usize {
        frames * self.windows + frames
    }
}

impl ModelConfig {
    /// 10 frames of 3×224×224, 48000 audio samples, depths [2,2,6,2], channels [8,16,32,64].
    pub fn paper() -> Self {
        Self {
            frames: 10,
            visual_channels: 3,
            height: 224,
            width: 224,
            audio_channels: 1,
            audio_len: 48000,
            stage_depths: vec![2, 2, 6, 2],
            stage_channels: vec![8, 16, 32, 64],
            attn_channels: 1,
            window: 7,
            visual_stem_stride: 4,
            audio_stem_stride: 12,
            mlp_ratio: 4,
        }
    }

    /// Laptop-scale variant: 64×64 frames, 4800 audio samples, t = 2.
    pub fn desk() -> Self {
        Self {
            height: 64,
            width: 64,
            audio_len: 4800,
            window: 2,
            ..Self::paper()
        }
    }

    /// Smallest configuration exercising every layer; used for gradient checks.
    pub fn tiny() -> Self {
        Self {
            frames: 2,
            visual_channels: 3,
            height: 16,
            width: 16,
            audio_channels: 1,
            audio_len: 64,
            stage_depths: vec![1, 1, 1, 1],
            stage_channels: vec![2, 4, 6, 8],
            attn_channels: 1,
            window: 1,
            visual_stem_stride: 2,
            audio_stem_stride: 4,
            mlp_ratio: 2,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected paper, desk or tiny)"
            ))),
        }
    }

    pub fn stages(&self) -> usize {
        self.stage_channels.len()
    }

    pub fn final_channels(&self) -> usize {
        *self.stage_channels.last().unwrap_or(&0)
    }

    pub fn token_dim(&self) -> usize {
        self.window * self.window * self.attn_channels
    }

    pub fn visual_input_dims(&self) -> [usize; 4] {
        [self.frames, self.visual_channels, self.height, self.width]
    }

    pub fn audio_input_dims(&self) -> [usize; 2] {
        [self.audio_channels, self.audio_len]
    }

    /// Per-stage extents; fails when any invariant is violated.
    pub fn stage_shapes(&self) -> Result<Vec<StageShape>> {
        let bad = |m: String| Err(Error::Config(m));
        if self.stage_depths.len() != 4 || self.stage_channels.len() != 4 {
            return bad(format!(
                "expected 4 stages, got depths {:?} / channels {:?}",
                self.stage_depths, self.stage_channels
            ));
        }
        if [
            self.frames,
            self.visual_channels,
            self.height,
            self.width,
            self.audio_channels,
            self.audio_len,
            self.attn_channels,
            self.window,
            self.visual_stem_stride,
            self.audio_stem_stride,
            self.mlp_ratio,
        ]
        .contains(&0)
        {
            return bad("all extents, strides and widths must be positive".into());
        }
        if self.stage_channels.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "stage channels {:?} must be strictly increasing",
                self.stage_channels
            ));
        }
        if self.attn_channels > self.stage_channels[0] {
            return bad(format!(
                "attention width {} exceeds first stage width {}",
                self.attn_channels, self.stage_channels[0]
            ));
        }
        let t = self.window;
        let mut h = conv_out_extent(
            self.height,
            VISUAL_STEM_KERNEL,
            self.visual_stem_stride,
            VISUAL_STEM_PAD,
        )?;
        let mut w = conv_out_extent(self.width, VISUAL_STEM_KERNEL, self.visual_stem_stride, VISUAL_STEM_PAD)?;
        let mut l = conv_out_extent(
            self.audio_len,
            AUDIO_STEM_KERNEL,
            self.audio_stem_stride,
            AUDIO_STEM_PAD,
        )?;
        let mut shapes = Vec::with_capacity(4);
        for (s, (&c, &d)) in self.stage_channels.iter().zip(&self.stage_depths).enumerate() {
            if s > 0 {
                h = conv_out_extent(h, VISUAL_DOWN_KERNEL, DOWN_STRIDE, VISUAL_DOWN_PAD)?;
                w = conv_out_extent(w, VISUAL_DOWN_KERNEL, DOWN_STRIDE, VISUAL_DOWN_PAD)?;
                l = conv_out_extent(l, AUDIO_DOWN_KERNEL, DOWN_STRIDE, AUDIO_DOWN_PAD)?;
            }
            if h % t != 0 || w % t != 0 {
                return bad(format!("stage {} extent {h}x{w} not divisible by window {t}", s + 1));
            }
            if l % self.frames != 0 {
                return bad(format!(
                    "stage {} audio length {l} not divisible by {} frames",
                    s + 1,
                    self.frames
                ));
            }
            shapes.push(StageShape {
                channels: c,
                height: h,
                width: w,
                audio_len: l,
                windows: h * w / (t * t),
                token_dim: self.token_dim(),
                depth: d,
            });
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.stage_shapes().map(|_| ())
    }
}
