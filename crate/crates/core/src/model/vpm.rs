//! Visual preprocessing module: temporal frame fusion around a frame-wise
//! large-kernel spatial attention and a channel MLP.
//!
//! ```text
//! F''  = FrameFuse1(F')                       (T×T linear on the frame axis)
//! P    = ReLU(Proj1(F''))
//! Q    = P ⊙ Proj2(DConv7x7(DConv5x5(P)))
//! S    = P + Proj3(Q)
//! out  = F' + FrameFuse2(MLP(S))
//! ```
//!
//! Spatial attention and the MLP act on each frame with shared weights.

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Var};

use super::layers::{DepthwiseConv2d, Linear};
use super::params::{Bound, ParamBuilder};

/// Init gain of the layer closing each residual branch; keeps a deep stack
/// near the identity at initialisation.
pub const RESIDUAL_GAIN: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct Vpm {
    pub frames: usize,
    pub channels: usize,
    pub frame_fuse_in: Linear,
    pub proj_in: Linear,
    pub dconv5: DepthwiseConv2d,
    pub dconv7: DepthwiseConv2d,
    pub proj_attn: Linear,
    pub proj_out: Linear,
    pub mlp_up: Linear,
    pub mlp_down: Linear,
    pub frame_fuse_out: Linear,
}

impl Vpm {
    pub fn new<S: Scalar>(
        b: &mut ParamBuilder<'_, S>,
        name: &str,
        frames: usize,
        channels: usize,
        mlp_ratio: usize,
    ) -> Self {
        let c = channels;
        let hidden = c * mlp_ratio;
        Self {
            frames,
            channels,
            frame_fuse_in: Linear::new(b, &format!("{name}.frame_fuse_in"), frames, frames, true),
            proj_in: Linear::new(b, &format!("{name}.proj_in"), c, c, true),
            dconv5: DepthwiseConv2d::new(b, &format!("{name}.dconv5"), c, 5),
            dconv7: DepthwiseConv2d::new(b, &format!("{name}.dconv7"), c, 7),
            proj_attn: Linear::new(b, &format!("{name}.proj_attn"), c, c, true),
            proj_out: Linear::new(b, &format!("{name}.proj_out"), c, c, true),
            mlp_up: Linear::new(b, &format!("{name}.mlp_up"), c, hidden, true),
            mlp_down: Linear::with_gain(b, &format!("{name}.mlp_down"), hidden, c, true, RESIDUAL_GAIN),
            frame_fuse_out: Linear::new(b, &format!("{name}.frame_fuse_out"), frames, frames, true),
        }
    }

    fn check(&self, x: &Var<'_, impl Scalar>) -> Result<()> {
        let d = x.dims();
        if d.len() != 4 || d[0] != self.frames || d[1] != self.channels {
            return Err(shape_err!(
                "VPM expects ({}, {}, H, W), got {:?}",
                self.frames,
                self.channels,
                d
            ));
        }
        Ok(())
    }

    /// Frame-wise spatial attention on (T, C, H, W); no temporal mixing.
    pub fn spatial_attention<'g, S: Scalar>(&self, p: &Bound<'g, S>, x: &Var<'g, S>) -> Result<Var<'g, S>> {
        let pm = self.proj_in.forward(p, x, 1)?.relu();
        let attn = self.dconv7.forward(p, &self.dconv5.forward(p, &pm)?)?;
        let q = pm.mul(&self.proj_attn.forward(p, &attn, 1)?)?;
        pm.add(&self.proj_out.forward(p, &q, 1)?)
    }

    pub fn forward<'g, S: Scalar>(&self, p: &Bound<'g, S>, x: &Var<'g, S>) -> Result<Var<'g, S>> {
        self.check(x)?;
        let fused = self.frame_fuse_in.forward(p, x, 0)?;
        let s = self.spatial_attention(p, &fused)?;
        let m = self.mlp_down.forward(p, &self.mlp_up.forward(p, &s, 1)?.relu(), 1)?;
        let out = self.frame_fuse_out.forward(p, &m, 0)?;
        x.add(&out)
    }
}
