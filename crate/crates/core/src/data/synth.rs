//! Synthetic four-type audio-visual clips.
//!
//! A real clip is a smooth blob drifting over a static background whose
//! brightness follows an envelope e(t); the same envelope modulates a sine
//! carrier in the audio, coupling the two modalities. A visual forgery swaps
//! the blob for a high-frequency textured patch whose envelope is
//! orthogonalised against the audio envelope. An audio forgery is a carrier
//! with a near-constant envelope (a small ripple orthogonal to the visual
//! envelope) and random phase discontinuities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tensor::{RngState, Tensor};

use super::manifest::{ForgeryType, ManifestRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Clips per forgery type, in [`ForgeryType::ALL`] order.
    pub counts: [usize; 4],
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub audio_len: usize,
    pub seed: u64,
    /// Relative contrast of the forged visual texture.
    pub texture_strength: f64,
    /// Phase discontinuities per forged audio clip.
    pub phase_jumps: usize,
    /// Relative amplitude of the forged audio envelope ripple.
    pub ripple: f64,
    /// Gaussian pixel noise standard deviation.
    pub pixel_noise: f64,
    /// Gaussian audio noise standard deviation.
    pub audio_noise: f64,
}

impl SynthConfig {
    /// Clip extents of a model configuration with default artifact strengths.
    pub fn for_model(cfg: &ModelConfig, counts: [usize; 4], seed: u64) -> Self {
        Self {
            counts,
            frames: cfg.frames,
            height: cfg.height,
            width: cfg.width,
            audio_len: cfg.audio_len,
            seed,
            texture_strength: 0.6,
            phase_jumps: 12,
            ripple: 0.1,
            pixel_noise: 0.01,
            audio_noise: 0.005,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 || self.height < 4 || self.width < 4 || self.audio_len < self.frames {
            return Err(Error::Config(
                "synthetic clips need ≥2 frames, ≥4×4 pixels and ≥1 sample per frame".into(),
            ));
        }
        if !self.audio_len.is_multiple_of(self.frames) {
            return Err(Error::Config(
                "audio length must be a multiple of the frame count".into(),
            ));
        }
        Ok(())
    }

    /// Forgery type of record `i`.
    pub fn type_of(&self, i: usize) -> ForgeryType {
        let mut acc = 0;
        for t in ForgeryType::ALL {
            acc += self.counts[t.index()];
            if i < acc {
                return t;
            }
        }
        panic!("record {i} out of range");
    }

    pub fn records(&self) -> Vec<ManifestRecord> {
        (0..self.len())
            .map(|i| {
                let id = clip_id(i);
                ManifestRecord::new(
                    id.clone(),
                    format!("clips/{id}.v.sstn"),
                    format!("clips/{id}.a.sstn"),
                    self.type_of(i),
                )
            })
            .collect()
    }

    /// Visual (T, 3, H, W) and audio (1, L) tensors of record `i`.
    pub fn clip(&self, i: usize) -> (Tensor<f32>, Tensor<f32>) {
        generate(self, self.type_of(i), &mut RngState::new(self.seed).derive(&[i as u64]))
    }
}

pub fn clip_id(i: usize) -> String {
    format!("clip{i:05}")
}

fn centered(x: &[f64]) -> Vec<f64> {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - m).collect()
}

/// Zero-mean part of `x` with its projection on `reference` removed,
/// scaled to unit peak magnitude.
fn orthogonal_to(x: &[f64], reference: &[f64]) -> Vec<f64> {
    let (xc, rc) = (centered(x), centered(reference));
    let rr: f64 = rc.iter().map(|v| v * v).sum();
    let k = if rr > 0.0 {
        xc.iter().zip(&rc).map(|(a, b)| a * b).sum::<f64>() / rr
    } else {
        0.0
    };
    let o: Vec<f64> = xc.iter().zip(&rc).map(|(a, b)| a - k * b).collect();
    let peak = o.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    o.iter().map(|v| v / peak).collect()
}

/// Smooth brightness envelope in roughly [0.15, 0.85].
fn envelope(t: usize, rng: &mut RngState) -> Vec<f64> {
    let (f1, p1) = (rng.uniform(0.6, 1.6), rng.uniform(0.0, 2.0 * PI));
    let (f2, p2) = (rng.uniform(1.8, 3.2), rng.uniform(0.0, 2.0 * PI));
    let raw: Vec<f64> = (0..t)
        .map(|k| {
            let x = k as f64 / t as f64;
            (2.0 * PI * f1 * x + p1).sin() + 0.4 * (2.0 * PI * f2 * x + p2).sin()
        })
        .collect();
    orthogonal_to(&raw, &vec![0.0; t])
        .iter()
        .map(|v| 0.5 + 0.35 * v)
        .collect()
}

fn generate(cfg: &SynthConfig, kind: ForgeryType, rng: &mut RngState) -> (Tensor<f32>, Tensor<f32>) {
    let labels = kind.labels();
    let t = cfg.frames;
    let e_audio = envelope(t, rng);
    let e_visual = if labels.visual {
        e_audio.clone()
    } else {
        let other = envelope(t, rng);
        orthogonal_to(&other, &e_audio).iter().map(|v| 0.5 + 0.35 * v).collect()
    };
    let e_audio = if labels.audio {
        e_audio
    } else {
        let other = envelope(t, rng);
        orthogonal_to(&other, &e_visual)
            .iter()
            .map(|v| 0.5 + 0.5 * cfg.ripple * v)
            .collect()
    };
    let v = visual(cfg, labels.visual, &e_visual, rng);
    let a = audio(cfg, labels.audio, &e_audio, rng);
    (v, a)
}

fn visual(cfg: &SynthConfig, real: bool, env: &[f64], rng: &mut RngState) -> Tensor<f32> {
    let (t, h, w) = (cfg.frames, cfg.height, cfg.width);
    let (hf, wf) = (h as f64, w as f64);
    let base: Vec<f64> = (0..3).map(|_| rng.uniform(0.1, 0.3)).collect();
    let tilt = rng.uniform(-0.1, 0.1);
    let color: Vec<f64> = (0..3).map(|_| rng.uniform(0.4, 0.7)).collect();
    let radius = rng.uniform(0.12, 0.2) * hf;
    let (cy0, cx0) = (rng.uniform(0.35, 0.65) * hf, rng.uniform(0.35, 0.65) * wf);
    let (vy, vx) = (rng.uniform(-0.02, 0.02) * hf, rng.uniform(-0.02, 0.02) * wf);
    // fixed ±1 texture on 2×2 cells in patch coordinates
    let cells = (2.0 * radius).ceil() as usize / 2 + 2;
    let texture: Vec<f64> = (0..cells * cells)
        .map(|_| if rng.bernoulli(0.5) { 1.0 } else { -1.0 })
        .collect();
    let mut out = vec![0f32; t * 3 * h * w];
    for f in 0..t {
        let (cy, cx) = (cy0 + vy * f as f64, cx0 + vx * f as f64);
        for y in 0..h {
            for x in 0..w {
                let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
                let shape = if real {
                    (-(dy * dy + dx * dx) / (2.0 * radius * radius)).exp()
                } else if dy.abs() < radius && dx.abs() < radius {
                    let (py, px) = (((dy + radius) / 2.0) as usize, ((dx + radius) / 2.0) as usize);
                    1.0 + cfg.texture_strength * texture[(py % cells) * cells + px % cells]
                } else {
                    0.0
                };
                for c in 0..3 {
                    let bg = base[c] + tilt * x as f64 / wf;
                    let val = bg + env[f] * color[c] * shape + cfg.pixel_noise * rng.normal();
                    out[((f * 3 + c) * h + y) * w + x] = val as f32;
                }
            }
        }
    }
    Tensor::new(&[t, 3, h, w], out).expect("extents")
}

fn audio(cfg: &SynthConfig, real: bool, env: &[f64], rng: &mut RngState) -> Tensor<f32> {
    let (t, l) = (cfg.frames, cfg.audio_len);
    let seg = l / t;
    let freq = rng.uniform(0.02, 0.08);
    let mut phase = rng.uniform(0.0, 2.0 * PI);
    let mut jumps: Vec<usize> = if real {
        Vec::new()
    } else {
        (0..cfg.phase_jumps).map(|_| rng.below(l)).collect()
    };
    jumps.sort_unstable();
    let mut next = 0;
    let mut out = Vec::with_capacity(l);
    for n in 0..l {
        while next < jumps.len() && jumps[next] == n {
            phase += rng.uniform(0.5 * PI, 1.5 * PI);
            next += 1;
        }
        // amplitude interpolated between segment centres
        let pos = (n as f64 + 0.5) / seg as f64 - 0.5;
        let k = (pos.floor().max(0.0) as usize).min(t - 1);
        let frac = (pos - k as f64).clamp(0.0, 1.0);
        let amp = if k + 1 < t {
            env[k] * (1.0 - frac) + env[k + 1] * frac
        } else {
            env[k]
        };
        let s = amp * (2.0 * PI * freq * n as f64 + phase).sin() + cfg.audio_noise * rng.normal();
        out.push(s as f32);
    }
    Tensor::new(&[1, l], out).expect("extents")
}

/// Per-frame mean intensity of a (T, C, H, W) clip.
pub fn visual_envelope(v: &Tensor<f32>) -> Vec<f64> {
    let t = v.dims()[0];
    let n = v.numel() / t;
    v.data()
        .chunks(n)
        .map(|c| c.iter().map(|&x| x as f64).sum::<f64>() / n as f64)
        .collect()
}

/// Per-frame RMS of a (1, L) waveform split into `frames` segments.
pub fn audio_envelope(a: &Tensor<f32>, frames: usize) -> Vec<f64> {
    let seg = a.numel() / frames;
    a.data()
        .chunks(seg)
        .take(frames)
        .map(|c| (c.iter().map(|&x| (x as f64).powi(2)).sum::<f64>() / seg as f64).sqrt())
        .collect()
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (xc, yc) = (centered(x), centered(y));
    let sxy: f64 = xc.iter().zip(&yc).map(|(a, b)| a * b).sum();
    let sxx: f64 = xc.iter().map(|a| a * a).sum();
    let syy: f64 = yc.iter().map(|b| b * b).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}
