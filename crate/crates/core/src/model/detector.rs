use crate::error::{shape_err, Result};
use crate::tensor::{Graph, RngState, Scalar, Tensor, Var};

use super::config::*;
use super::heads::{prob_real, ClassifierOutput, Heads};
use super::layers::{Conv1d, Conv2d};
use super::params::{Bound, ParamBuilder, ParamStore};
use super::saavm::Saavm;
use super::vpm::Vpm;

/// Init gain of layers feeding a ReLU (stems and down-samplers), which
/// halves the variance it passes on.
pub const RELU_GAIN: f64 = std::f64::consts::SQRT_2;

/// One collaborative audio-visual block.
#[derive(Clone, Debug)]
pub struct CavlBlock {
    pub vpm: Vpm,
    pub saavm: Saavm,
}

#[derive(Clone, Debug)]
pub struct Stage {
    pub down_v: Option<Conv2d>,
    pub down_a: Option<Conv1d>,
    pub blocks: Vec<CavlBlock>,
    pub shape: StageShape,
}

/// Layer layout derived from a [`ModelConfig`]; holds only parameter ids.
#[derive(Clone, Debug)]
pub struct Architecture {
    pub visual_stem: Conv2d,
    pub audio_stem: Conv1d,
    pub stages: Vec<Stage>,
    pub heads: Heads,
}

impl Architecture {
    fn build<S: Scalar>(cfg: &ModelConfig, b: &mut ParamBuilder<'_, S>) -> Result<Self> {
        let shapes = cfg.stage_shapes()?;
        let c1 = cfg.stage_channels[0];
        let visual_stem = Conv2d::with_gain(
            b,
            "stem.visual",
            cfg.visual_channels,
            c1,
            VISUAL_STEM_KERNEL,
            cfg.visual_stem_stride,
            VISUAL_STEM_PAD,
            RELU_GAIN,
        );
        let audio_stem = Conv1d::with_gain(
            b,
            "stem.audio",
            cfg.audio_channels,
            c1,
            AUDIO_STEM_KERNEL,
            cfg.audio_stem_stride,
            AUDIO_STEM_PAD,
            RELU_GAIN,
        );
        let mut stages = Vec::with_capacity(shapes.len());
        for (s, shape) in shapes.iter().enumerate() {
            let name = format!("stage{}", s + 1);
            let (down_v, down_a) = if s == 0 {
                (None, None)
            } else {
                let (ci, co) = (shapes[s - 1].channels, shape.channels);
                (
                    Some(Conv2d::with_gain(
                        b,
                        &format!("{name}.down_v"),
                        ci,
                        co,
                        VISUAL_DOWN_KERNEL,
                        DOWN_STRIDE,
                        VISUAL_DOWN_PAD,
                        RELU_GAIN,
                    )),
                    Some(Conv1d::with_gain(
                        b,
                        &format!("{name}.down_a"),
                        ci,
                        co,
                        AUDIO_DOWN_KERNEL,
                        DOWN_STRIDE,
                        AUDIO_DOWN_PAD,
                        RELU_GAIN,
                    )),
                )
            };
            let blocks = (0..shape.depth)
                .map(|k| CavlBlock {
                    vpm: Vpm::new(
                        b,
                        &format!("{name}.block{k}.vpm"),
                        cfg.frames,
                        shape.channels,
                        cfg.mlp_ratio,
                    ),
                    saavm: Saavm::new(
                        b,
                        &format!("{name}.block{k}.saavm"),
                        cfg.frames,
                        cfg.window,
                        cfg.attn_channels,
                        *shape,
                    ),
                })
                .collect();
            stages.push(Stage {
                down_v,
                down_a,
                blocks,
                shape: *shape,
            });
        }
        let heads = Heads::new(b, cfg.final_channels());
        Ok(Self {
            visual_stem,
            audio_stem,
            stages,
            heads,
        })
    }
}

/// The single-stream detector: configuration, layer layout and parameters.
#[derive(Clone, Debug)]
pub struct Detector<S> {
    cfg: ModelConfig,
    arch: Architecture,
    params: ParamStore<S>,
}

/// Real-class probabilities of one clip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub visual: f64,
    pub audio: f64,
    pub whole: f64,
}

impl<S: Scalar> Detector<S> {
    /// Seeded fan-in uniform initialisation.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = RngState::new(seed);
        Self::build(cfg, Some(&mut rng))
    }

    /// All parameters zero.
    pub fn zeroed(cfg: ModelConfig) -> Result<Self> {
        Self::build(cfg, None)
    }

    fn build(cfg: ModelConfig, rng: Option<&mut RngState>) -> Result<Self> {
        let mut params = ParamStore::new();
        let arch = {
            let mut b = ParamBuilder::new(&mut params, rng);
            Architecture::build(&cfg, &mut b)?
        };
        Ok(Self { cfg, arch, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    pub fn heads(&self) -> &Heads {
        &self.arch.heads
    }

    pub fn cast<T: Scalar>(&self) -> Detector<T> {
        Detector {
            cfg: self.cfg.clone(),
            arch: self.arch.clone(),
            params: self.params.cast(),
        }
    }

    /// Stems, down-samplers and stacked blocks for one clip.
    /// `v`: (T, C, H, W); `a`: (C_audio, L). Returns (T, C_4, H_4, W_4) and (C_4, L_4).
    pub fn backbone<'g>(&self, p: &Bound<'g, S>, v: &Var<'g, S>, a: &Var<'g, S>) -> Result<(Var<'g, S>, Var<'g, S>)> {
        let cfg = &self.cfg;
        if v.dims() != cfg.visual_input_dims() || a.dims() != cfg.audio_input_dims() {
            return Err(shape_err!(
                "inputs {:?} / {:?} do not match config {:?} / {:?}",
                v.dims(),
                a.dims(),
                cfg.visual_input_dims(),
                cfg.audio_input_dims()
            ));
        }
        let mut fv = self.arch.visual_stem.forward(p, v)?.relu();
        let a3 = a.reshape(&[1, cfg.audio_channels, cfg.audio_len])?;
        let mut fa = self.arch.audio_stem.forward(p, &a3)?.relu();
        for stage in &self.arch.stages {
            if let (Some(dv), Some(da)) = (&stage.down_v, &stage.down_a) {
                fv = dv.forward(p, &fv)?.relu();
                fa = da.forward(p, &fa)?.relu();
            }
            let d = fa.dims();
            let mut fa2 = fa.reshape(&[d[1], d[2]])?;
            for block in &stage.blocks {
                fv = block.vpm.forward(p, &fv)?;
                let (nv, na) = block.saavm.forward(p, &fv, &fa2)?;
                fv = nv;
                fa2 = na;
            }
            let d = fa2.dims();
            fa = fa2.reshape(&[1, d[0], d[1]])?;
        }
        let d = fa.dims();
        Ok((fv, fa.reshape(&[d[1], d[2]])?))
    }

    /// Stacks per-clip features into (N, T, C, H, W) and (N, C, L).
    pub fn stack<'g>(&self, g: &'g Graph<S>, feats: &[(Var<'g, S>, Var<'g, S>)]) -> Result<(Var<'g, S>, Var<'g, S>)> {
        let mut vs = Vec::with_capacity(feats.len());
        let mut as_ = Vec::with_capacity(feats.len());
        for (v, a) in feats {
            let mut dv = v.dims();
            dv.insert(0, 1);
            let mut da = a.dims();
            da.insert(0, 1);
            vs.push(v.reshape(&dv)?);
            as_.push(a.reshape(&da)?);
        }
        Ok((g.concat(&vs, 0)?, g.concat(&as_, 0)?))
    }

    /// Plain (evaluation) classification of batched features.
    pub fn classify<'g>(&self, p: &Bound<'g, S>, fv: &Var<'g, S>, fa: &Var<'g, S>) -> Result<ClassifierOutput<'g, S>> {
        let h = &self.arch.heads;
        let z_v = h.h_v.forward(p, fv)?;
        let z_a = h.h_a.forward(p, fa)?;
        let logits_v = h.p_v.forward(p, &z_v, 1)?;
        let logits_a = h.p_a.forward(p, &z_a, 1)?;
        let logits_w = h.whole_logits(p, &z_v, &z_a)?;
        Ok(ClassifierOutput {
            z_v,
            z_a,
            logits_v,
            logits_a,
            logits_w,
        })
    }

    /// Real-class probabilities for one clip, no gradient tracking.
    pub fn predict(&self, v: &Tensor<S>, a: &Tensor<S>) -> Result<Prediction> {
        Ok(self.predict_batch(&[(v, a)])?[0])
    }

    pub fn predict_batch(&self, clips: &[(&Tensor<S>, &Tensor<S>)]) -> Result<Vec<Prediction>> {
        let g = Graph::new();
        let p = self.params.bind_frozen(&g);
        let mut feats = Vec::with_capacity(clips.len());
        for (v, a) in clips {
            let fv = g.constant((*v).clone());
            let fa = g.constant((*a).clone());
            feats.push(self.backbone(&p, &fv, &fa)?);
        }
        let (fv, fa) = self.stack(&g, &feats)?;
        let out = self.classify(&p, &fv, &fa)?;
        let pv = prob_real(&out.logits_v)?.tensor();
        let pa = prob_real(&out.logits_a)?.tensor();
        let pw = prob_real(&out.logits_w)?.tensor();
        Ok((0..clips.len())
            .map(|i| Prediction {
                visual: pv.data()[i].as_f64(),
                audio: pa.data()[i].as_f64(),
                whole: pw.data()[i].as_f64(),
            })
            .collect())
    }
}
