//! Processing heads (depthwise conv, adaptive pool, linear) and the linear
//! prediction layers for the visual, audio and whole-video outputs.

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Var};

use super::layers::{DepthwiseConv1d, DepthwiseConv2d, Linear};
use super::params::{Bound, ParamBuilder};

/// Index of the "real" class in the two-logit outputs. Label 1 means real.
pub const REAL_CLASS: usize = 1;

/// Maps visual features (N, T, C, H, W) to latents (N, C).
#[derive(Clone, Debug)]
pub struct VisualHead {
    pub dconv: DepthwiseConv2d,
    pub fc: Linear,
}

impl VisualHead {
    pub fn new<S: Scalar>(b: &mut ParamBuilder<'_, S>, name: &str, c: usize) -> Self {
        Self {
            dconv: DepthwiseConv2d::new(b, &format!("{name}.dconv"), c, 3),
            fc: Linear::new(b, &format!("{name}.fc"), c, c, true),
        }
    }

    pub fn forward<'g, S: Scalar>(&self, p: &Bound<'g, S>, f: &Var<'g, S>) -> Result<Var<'g, S>> {
        let d = f.dims();
        if d.len() != 5 {
            return Err(shape_err!("visual head expects (N, T, C, H, W), got {:?}", d));
        }
        let (n, t, c, h, w) = (d[0], d[1], d[2], d[3], d[4]);
        let conv = self.dconv.forward(p, &f.reshape(&[n * t, c, h, w])?)?;
        let pooled = conv
            .reshape(&[n, t, c, h * w])?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[n, c, t * h * w])?
            .max_last()?;
        self.fc.forward(p, &pooled, 1)
    }
}

/// Maps audio features (N, C, L) to latents (N, C).
#[derive(Clone, Debug)]
pub struct AudioHead {
    pub dconv: DepthwiseConv1d,
    pub fc: Linear,
}

impl AudioHead {
    pub fn new<S: Scalar>(b: &mut ParamBuilder<'_, S>, name: &str, c: usize) -> Self {
        Self {
            dconv: DepthwiseConv1d::new(b, &format!("{name}.dconv"), c, 3),
            fc: Linear::new(b, &format!("{name}.fc"), c, c, true),
        }
    }

    pub fn forward<'g, S: Scalar>(&self, p: &Bound<'g, S>, f: &Var<'g, S>) -> Result<Var<'g, S>> {
        let d = f.dims();
        if d.len() != 3 {
            return Err(shape_err!("audio head expects (N, C, L), got {:?}", d));
        }
        let pooled = self.dconv.forward(p, f)?.max_last()?;
        self.fc.forward(p, &pooled, 1)
    }
}

/// All nine heads: processing heads, prediction layers, and the adversarial
/// duplicates that see style-only features.
#[derive(Clone, Debug)]
pub struct Heads {
    pub h_v: VisualHead,
    pub h_a: AudioHead,
    pub p_v: Linear,
    pub p_a: Linear,
    pub p_w: Linear,
    pub h_v_adv: VisualHead,
    pub h_a_adv: AudioHead,
    pub p_v_adv: Linear,
    pub p_a_adv: Linear,
}

impl Heads {
    pub fn new<S: Scalar>(b: &mut ParamBuilder<'_, S>, c: usize) -> Self {
        Self {
            h_v: VisualHead::new(b, "heads.h_v", c),
            h_a: AudioHead::new(b, "heads.h_a", c),
            p_v: Linear::new(b, "heads.p_v", c, 2, true),
            p_a: Linear::new(b, "heads.p_a", c, 2, true),
            p_w: Linear::new(b, "heads.p_w", 2 * c, 2, true),
            h_v_adv: VisualHead::new(b, "heads.h_v_adv", c),
            h_a_adv: AudioHead::new(b, "heads.h_a_adv", c),
            p_v_adv: Linear::new(b, "heads.p_v_adv", c, 2, true),
            p_a_adv: Linear::new(b, "heads.p_a_adv", c, 2, true),
        }
    }

    /// Whole-video logits from a visual and an audio latent batch, (N, 2).
    pub fn whole_logits<'g, S: Scalar>(
        &self,
        p: &Bound<'g, S>,
        z_v: &Var<'g, S>,
        z_a: &Var<'g, S>,
    ) -> Result<Var<'g, S>> {
        let z = z_v.graph().concat(&[*z_v, *z_a], 1)?;
        self.p_w.forward(p, &z, 1)
    }
}

/// Softmax probability of the real class for (N, 2) logits, shape (N).
pub fn prob_real<'g, S: Scalar>(logits: &Var<'g, S>) -> Result<Var<'g, S>> {
    let n = logits.dims()[0];
    logits.softmax(1)?.slice(1, REAL_CLASS, 1)?.reshape(&[n])
}

/// Latents and logits of a batch.
pub struct ClassifierOutput<'g, S> {
    pub z_v: Var<'g, S>,
    pub z_a: Var<'g, S>,
    pub logits_v: Var<'g, S>,
    pub logits_a: Var<'g, S>,
    pub logits_w: Var<'g, S>,
}
