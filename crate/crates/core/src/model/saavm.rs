//! Self-attention-based audio-visual module.
//!
//! Visual features (T, C, H, W) and audio features (C, L) are reduced to
//! C_m channels and cut into tokens of length t²·C_m: one per t×t window of
//! every frame (raster order within a frame, frames in order) and one per
//! audio split of length L/T (adaptive average pool). The T·N + T tokens
//! attend to each other jointly:
//!
//! ```text
//! K0 = [Kv; Ka] + PE
//! K1 = (softmax(K0 K0ᵀ / sqrt(d_k)) K0) W
//! ```
//!
//! The outputs are folded back (windows inverse-rastered, audio tokens
//! linearly interpolated to L/T), expanded to C channels and added to the
//! module input.

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Var};

use super::config::StageShape;
use super::layers::Linear;
use super::params::{Bound, ParamBuilder, ParamId};
use super::vpm::RESIDUAL_GAIN;

#[derive(Clone, Debug)]
pub struct Saavm {
    pub frames: usize,
    pub window: usize,
    pub attn_channels: usize,
    pub shape: StageShape,
    pub reduce_v: Linear,
    pub reduce_a: Linear,
    pub pos_embed: ParamId,
    pub attn_out: Linear,
    pub expand_v: Linear,
    pub expand_a: Linear,
}

/// Token matrices of one stage.
pub struct Tokens<'g, S> {
    /// (T·N, t²·C_m)
    pub visual: Var<'g, S>,
    /// (T, t²·C_m)
    pub audio: Var<'g, S>,
}

impl Saavm {
    pub fn new<S: Scalar>(
        b: &mut ParamBuilder<'_, S>,
        name: &str,
        frames: usize,
        window: usize,
        attn_channels: usize,
        shape: StageShape,
    ) -> Self {
        let (c, cm, d) = (shape.channels, attn_channels, shape.token_dim);
        Self {
            frames,
            window,
            attn_channels,
            shape,
            reduce_v: Linear::new(b, &format!("{name}.reduce_v"), c, cm, true),
            reduce_a: Linear::new(b, &format!("{name}.reduce_a"), c, cm, true),
            pos_embed: b.zeros(&format!("{name}.pos_embed"), &[shape.total_tokens(frames), d]),
            attn_out: Linear::new(b, &format!("{name}.attn_out"), d, d, true),
            expand_v: Linear::with_gain(b, &format!("{name}.expand_v"), cm, c, true, RESIDUAL_GAIN),
            expand_a: Linear::with_gain(b, &format!("{name}.expand_a"), cm, c, true, RESIDUAL_GAIN),
        }
    }

    fn check(&self, v: &Var<'_, impl Scalar>, a: &Var<'_, impl Scalar>) -> Result<()> {
        let s = &self.shape;
        let (vd, ad) = (v.dims(), a.dims());
        if vd != [self.frames, s.channels, s.height, s.width] || ad != [s.channels, s.audio_len] {
            return Err(shape_err!(
                "SAAVM expects visual ({}, {}, {}, {}) and audio ({}, {}), got {:?} and {:?}",
                self.frames,
                s.channels,
                s.height,
                s.width,
                s.channels,
                s.audio_len,
                vd,
                ad
            ));
        }
        Ok(())
    }

    pub fn forward<'g, S: Scalar>(
        &self,
        p: &Bound<'g, S>,
        v: &Var<'g, S>,
        a: &Var<'g, S>,
    ) -> Result<(Var<'g, S>, Var<'g, S>)> {
        self.check(v, a)?;
        let rv = self.reduce_v.forward(p, v, 1)?;
        let ra = self.reduce_a.forward(p, a, 0)?;
        let tokens = tokenize(&rv, &ra, self.frames, self.window)?;
        let g = v.graph();
        let k0 = g
            .concat(&[tokens.visual, tokens.audio], 0)?
            .add(p.get(self.pos_embed))?;
        let mixed = attention_mix(&k0)?;
        let k1 = self.attn_out.forward(p, &mixed, 1)?;
        let n_vis = self.shape.visual_tokens(self.frames);
        let kv = k1.slice(0, 0, n_vis)?;
        let ka = k1.slice(0, n_vis, self.frames)?;
        let (fv, fa) = untokenize(
            &kv,
            &ka,
            self.frames,
            self.window,
            self.attn_channels,
            self.shape.height,
            self.shape.width,
            self.shape.audio_len,
        )?;
        let ev = self.expand_v.forward(p, &fv, 1)?;
        let ea = self.expand_a.forward(p, &fa, 0)?;
        Ok((v.add(&ev)?, a.add(&ea)?))
    }
}

/// Attention weights `softmax(K Kᵀ / sqrt(d_k))` over the token rows of `k`.
pub fn attention_weights<'g, S: Scalar>(k: &Var<'g, S>) -> Result<Var<'g, S>> {
    let d = k.dims()[1] as f64;
    k.matmul(&k.transpose()?)?.scale(1.0 / d.sqrt()).softmax(1)
}

/// `softmax(K Kᵀ / sqrt(d_k)) K`.
pub fn attention_mix<'g, S: Scalar>(k: &Var<'g, S>) -> Result<Var<'g, S>> {
    attention_weights(k)?.matmul(k)
}

/// Cuts reduced features into token matrices.
///
/// `v`: (T, C_m, H, W) with H, W divisible by `window`; `a`: (C_m, L) with L
/// divisible by T. Token layout is (c, dy, dx) for visual windows and
/// (c, pooled position) for audio splits.
pub fn tokenize<'g, S: Scalar>(v: &Var<'g, S>, a: &Var<'g, S>, frames: usize, window: usize) -> Result<Tokens<'g, S>> {
    let (vd, ad) = (v.dims(), a.dims());
    let t = window;
    if vd.len() != 4 || ad.len() != 2 || vd[0] != frames || vd[1] != ad[0] {
        return Err(shape_err!("tokenize: visual {:?} / audio {:?}", vd, ad));
    }
    let (cm, h, w, l) = (vd[1], vd[2], vd[3], ad[1]);
    if t == 0 || h % t != 0 || w % t != 0 {
        return Err(shape_err!("frame {h}x{w} not divisible by window {t}"));
    }
    if l % frames != 0 {
        return Err(shape_err!("audio length {l} not divisible by {frames} frames"));
    }
    let (gh, gw) = (h / t, w / t);
    let visual = v
        .reshape(&[frames, cm, gh, t, gw, t])?
        .permute(&[0, 2, 4, 1, 3, 5])?
        .reshape(&[frames * gh * gw, cm * t * t])?;
    let audio = a
        .reshape(&[cm, frames, l / frames])?
        .adaptive_avg_pool_last(t * t)?
        .permute(&[1, 0, 2])?
        .reshape(&[frames, cm * t * t])?;
    Ok(Tokens { visual, audio })
}

/// Inverse of [`tokenize`]: visual tokens back to (T, C_m, H, W), audio tokens
/// interpolated back to (C_m, L).
#[allow(clippy::too_many_arguments)]
pub fn untokenize<'g, S: Scalar>(
    kv: &Var<'g, S>,
    ka: &Var<'g, S>,
    frames: usize,
    window: usize,
    attn_channels: usize,
    height: usize,
    width: usize,
    audio_len: usize,
) -> Result<(Var<'g, S>, Var<'g, S>)> {
    let (t, cm) = (window, attn_channels);
    let (gh, gw) = (height / t, width / t);
    let fv = kv
        .reshape(&[frames, gh, gw, cm, t, t])?
        .permute(&[0, 3, 1, 4, 2, 5])?
        .reshape(&[frames, cm, height, width])?;
    let fa = ka
        .reshape(&[frames, cm, t * t])?
        .permute(&[1, 0, 2])?
        .interp_last(audio_len / frames)?
        .reshape(&[cm, audio_len])?;
    Ok((fv, fa))
}
