//! Training-time input augmentation. Each transform fires on an independent
//! coin flip; labels are never touched.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::tensor::{RngState, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub flip_p: f64,
    pub rotate_p: f64,
    /// Rotation angles are drawn from {±5°, ±10°}.
    pub pixel_noise_p: f64,
    /// Maximum pixel noise σ as a fraction of the clip's dynamic range.
    pub pixel_noise_max: f64,
    pub jpeg_p: f64,
    /// JPEG-like quality range (1–100).
    pub jpeg_quality: (f64, f64),
    pub audio_noise_p: f64,
    pub audio_noise_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_p: 0.5,
            rotate_p: 0.3,
            pixel_noise_p: 0.3,
            pixel_noise_max: 0.02,
            jpeg_p: 0.3,
            jpeg_quality: (30.0, 90.0),
            audio_noise_p: 0.3,
            audio_noise_max: 0.005,
        }
    }
}

impl AugmentConfig {
    /// Every transform disabled.
    pub fn off() -> Self {
        Self {
            flip_p: 0.0,
            rotate_p: 0.0,
            pixel_noise_p: 0.0,
            jpeg_p: 0.0,
            audio_noise_p: 0.0,
            ..Self::default()
        }
    }

    pub fn is_off(&self) -> bool {
        [
            self.flip_p,
            self.rotate_p,
            self.pixel_noise_p,
            self.jpeg_p,
            self.audio_noise_p,
        ]
        .iter()
        .all(|&p| p <= 0.0)
    }
}

const ANGLES: [f64; 4] = [-10.0, -5.0, 5.0, 10.0];

/// Applies the configured transforms to a (T, C, H, W) clip and its (C, L) audio.
pub fn augment(
    v: &Tensor<f32>,
    a: &Tensor<f32>,
    rng: &mut RngState,
    cfg: &AugmentConfig,
) -> (Tensor<f32>, Tensor<f32>) {
    let mut v = v.clone();
    let mut a = a.clone();
    // draw every coin up front so enabling one transform never shifts another's draws
    let coins: Vec<bool> = [
        cfg.flip_p,
        cfg.rotate_p,
        cfg.pixel_noise_p,
        cfg.jpeg_p,
        cfg.audio_noise_p,
    ]
    .iter()
    .map(|&p| p > 0.0 && rng.bernoulli(p))
    .collect();
    if coins[0] {
        v = hflip(&v);
    }
    if coins[1] {
        v = rotate(&v, ANGLES[rng.below(4)]);
    }
    if coins[2] {
        let (lo, hi) = v
            .data()
            .iter()
            .fold((f32::MAX, f32::MIN), |(l, h), &x| (l.min(x), h.max(x)));
        let sigma = rng.uniform(0.0, cfg.pixel_noise_max) * (hi - lo) as f64;
        for x in v.data_mut() {
            *x += (sigma * rng.normal()) as f32;
        }
    }
    if coins[3] {
        let q = rng.uniform(cfg.jpeg_quality.0, cfg.jpeg_quality.1);
        v = jpeg_like(&v, q);
    }
    if coins[4] {
        let sigma = rng.uniform(0.0, cfg.audio_noise_max);
        for x in a.data_mut() {
            *x += (sigma * rng.normal()) as f32;
        }
    }
    (v, a)
}

fn planes(t: &Tensor<f32>) -> (usize, usize, usize) {
    let d = t.dims();
    let (h, w) = (d[d.len() - 2], d[d.len() - 1]);
    (t.numel() / (h * w), h, w)
}

/// Mirrors every frame left-right.
pub fn hflip(v: &Tensor<f32>) -> Tensor<f32> {
    let (_, _, w) = planes(v);
    let mut out = v.clone();
    for row in out.data_mut().chunks_mut(w) {
        row.reverse();
    }
    out
}

/// Rotates every frame by `degrees` about its centre, bilinear, edge padding.
pub fn rotate(v: &Tensor<f32>, degrees: f64) -> Tensor<f32> {
    let (n, h, w) = planes(v);
    let (s, c) = (degrees * PI / 180.0).sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let src = v.data();
    let mut out = vec![0f32; v.numel()];
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let sy = (c * dy - s * dx + cy).clamp(0.0, h as f64 - 1.0);
            let sx = (s * dy + c * dx + cx).clamp(0.0, w as f64 - 1.0);
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
            for p in 0..n {
                let img = &src[p * h * w..(p + 1) * h * w];
                let at = |yy: usize, xx: usize| img[yy * w + xx] as f64;
                let val = (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x1))
                    + fy * ((1.0 - fx) * at(y1, x0) + fx * at(y1, x1));
                out[p * h * w + y * w + x] = val as f32;
            }
        }
    }
    Tensor::new(v.dims(), out).expect("same extents")
}

const JPEG_LUMA: [f64; 64] = [
    16., 11., 10., 16., 24., 40., 51., 61., 12., 12., 14., 19., 26., 58., 60., 55., 14., 13., 16., 24., 40., 57., 69.,
    56., 14., 17., 22., 29., 51., 87., 80., 62., 18., 22., 37., 56., 68., 109., 103., 77., 24., 35., 55., 64., 81.,
    104., 113., 92., 49., 64., 78., 87., 103., 121., 120., 101., 72., 92., 95., 98., 112., 100., 103., 99.,
];

fn dct_basis() -> [[f64; 8]; 8] {
    let mut b = [[0.0; 8]; 8];
    for (k, row) in b.iter_mut().enumerate() {
        let a = if k == 0 {
            (1.0f64 / 8.0).sqrt()
        } else {
            (2.0f64 / 8.0).sqrt()
        };
        for (n, v) in row.iter_mut().enumerate() {
            *v = a * (PI * (2.0 * n as f64 + 1.0) * k as f64 / 16.0).cos();
        }
    }
    b
}

/// Blockwise 8×8 DCT quantisation with the standard luminance table scaled
/// by `quality` (1–100), on pixel values in [0, 1] mapped to [0, 255].
/// Partial edge blocks are padded by replication.
pub fn jpeg_like(v: &Tensor<f32>, quality: f64) -> Tensor<f32> {
    let (n, h, w) = planes(v);
    let q = quality.clamp(1.0, 100.0);
    let scale = if q < 50.0 { 5000.0 / q } else { 200.0 - 2.0 * q } / 100.0;
    let table: Vec<f64> = JPEG_LUMA.iter().map(|&t| (t * scale).round().max(1.0)).collect();
    let basis = dct_basis();
    let mut out = v.data().to_vec();
    let mut block = [[0.0f64; 8]; 8];
    let mut coef = [[0.0f64; 8]; 8];
    for p in 0..n {
        let img = &mut out[p * h * w..(p + 1) * h * w];
        for by in (0..h).step_by(8) {
            for bx in (0..w).step_by(8) {
                for (i, row) in block.iter_mut().enumerate() {
                    for (j, b) in row.iter_mut().enumerate() {
                        let (y, x) = ((by + i).min(h - 1), (bx + j).min(w - 1));
                        *b = img[y * w + x] as f64 * 255.0 - 128.0;
                    }
                }
                for u in 0..8 {
                    for vv in 0..8 {
                        let mut s = 0.0;
                        for i in 0..8 {
                            for j in 0..8 {
                                s += basis[u][i] * basis[vv][j] * block[i][j];
                            }
                        }
                        let t = table[u * 8 + vv];
                        coef[u][vv] = (s / t).round() * t;
                    }
                }
                for i in 0..8 {
                    for j in 0..8 {
                        let (y, x) = (by + i, bx + j);
                        if y >= h || x >= w {
                            continue;
                        }
                        let mut s = 0.0;
                        for u in 0..8 {
                            for vv in 0..8 {
                                s += basis[u][i] * basis[vv][j] * coef[u][vv];
                            }
                        }
                        img[y * w + x] = ((s + 128.0) / 255.0) as f32;
                    }
                }
            }
        }
    }
    Tensor::new(v.dims(), out).expect("same extents")
}
