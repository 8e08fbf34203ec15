//! Training objective: style-shuffle augmentation (MMSSA), latent-shuffle
//! augmentation (LSA), and the classification, adversarial and contrast
//! losses combined as `γ1·L_cls + γ2·L_adv + γ3·L_con`.

mod loss;
mod style;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::model::{prob_real, Bound, Heads};
use crate::tensor::{RngState, Scalar, Tensor, Var};

pub use loss::{bce, contrast, half_label_ce, lsa_labels, NORM_EPS, P_EPS};
pub use style::{shuffle_rows, style_shuffle, style_shuffle_batch, style_stats, StyleStats, STYLE_EPS};

/// Range ω is drawn from during training.
pub const OMEGA_RANGE: (f64, f64) = (0.05, 0.95);

/// Per-sample ground truth; `true` means real.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTriple {
    pub visual: bool,
    pub audio: bool,
}

impl LabelTriple {
    pub fn new(visual: bool, audio: bool) -> Self {
        Self { visual, audio }
    }

    /// A video is real only when both modalities are.
    pub fn whole(&self) -> bool {
        self.visual && self.audio
    }
}

fn as_f64(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Label columns (visual, audio, whole) as 0/1 values.
pub fn label_columns(labels: &[LabelTriple]) -> [Vec<f64>; 3] {
    [
        labels.iter().map(|l| as_f64(l.visual)).collect(),
        labels.iter().map(|l| as_f64(l.audio)).collect(),
        labels.iter().map(|l| as_f64(l.whole())).collect(),
    ]
}

/// Which augmentation strategies and auxiliary losses are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toggles {
    pub lsa: bool,
    pub mmssa: bool,
    pub adversarial: bool,
    pub contrast: bool,
}

impl Toggles {
    pub const ALL: Toggles = Toggles {
        lsa: true,
        mmssa: true,
        adversarial: true,
        contrast: true,
    };

    /// Table rows (a)–(f) of the ablation study.
    pub fn ablation(row: char) -> Result<Self> {
        let t = |lsa, mmssa, adversarial, contrast| Toggles {
            lsa,
            mmssa,
            adversarial,
            contrast,
        };
        Ok(match row.to_ascii_lowercase() {
            'a' => t(false, false, true, true),
            'b' => t(false, true, true, true),
            'c' => t(true, false, true, true),
            'd' => t(true, true, false, true),
            'e' => t(true, true, true, false),
            'f' => Self::ALL,
            other => return Err(Error::Config(format!("unknown ablation row {other:?} (expected a-f)"))),
        })
    }

    /// Parses `all`, a row letter `a`–`f`, or a comma list such as `lsa,adv`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(Self::ALL);
        }
        if s.len() == 1 {
            return Self::ablation(s.chars().next().unwrap());
        }
        let mut t = Toggles {
            lsa: false,
            mmssa: false,
            adversarial: false,
            contrast: false,
        };
        if s.eq_ignore_ascii_case("none") {
            return Ok(t);
        }
        for part in s.split(',') {
            match part.trim().to_ascii_lowercase().as_str() {
                "lsa" => t.lsa = true,
                "mmssa" => t.mmssa = true,
                "adv" | "adversarial" => t.adversarial = true,
                "con" | "contrast" => t.contrast = true,
                other => return Err(Error::Config(format!("unknown toggle {other:?}"))),
            }
        }
        Ok(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Contrast margin.
    pub alpha: f64,
    /// Weight of the latent-shuffle term inside the classification loss.
    pub beta: f64,
    /// Weights of classification, adversarial and contrast losses.
    pub gamma: [f64; 3],
    pub toggles: Toggles,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            beta: 0.5,
            gamma: [1.0, 0.1, 1.0],
            toggles: Toggles::ALL,
        }
    }
}

impl LossConfig {
    pub fn with_toggles(toggles: Toggles) -> Self {
        Self {
            toggles,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1)", self.alpha)));
        }
        if self.beta < 0.0 || self.gamma.iter().any(|&g| g < 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Random pairings of one training step.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchShufflePlan {
    /// Style partner of each sample.
    pub style_perm: Vec<usize>,
    /// Mixing weight of each sample's own style.
    pub omega: Vec<f64>,
    /// Audio partner of each sample in latent shuffling.
    pub latent_perm: Vec<usize>,
}

impl BatchShufflePlan {
    /// Fresh uniform permutations and ω ~ U(OMEGA_RANGE).
    pub fn sample(n: usize, rng: &mut RngState) -> Self {
        let style_perm = rng.permutation(n);
        let omega = (0..n).map(|_| rng.uniform(OMEGA_RANGE.0, OMEGA_RANGE.1)).collect();
        let latent_perm = rng.permutation(n);
        Self {
            style_perm,
            omega,
            latent_perm,
        }
    }

    /// No shuffling at all.
    pub fn identity(n: usize) -> Self {
        Self {
            style_perm: (0..n).collect(),
            omega: vec![1.0; n],
            latent_perm: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.style_perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.style_perm.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let is_perm = |p: &[usize]| {
            let mut seen = vec![false; n];
            p.len() == n && p.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
        };
        if !is_perm(&self.style_perm) || !is_perm(&self.latent_perm) {
            return Err(Error::Contract("shuffle plan holds a non-permutation".into()));
        }
        if self.omega.len() != n || self.omega.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::Contract("mixing weights must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Predictions and latents of the style-shuffled path.
pub struct ModalityOutput<'g, S> {
    pub prob_v: Var<'g, S>,
    pub prob_a: Var<'g, S>,
    pub z_v: Var<'g, S>,
    pub z_a: Var<'g, S>,
}

/// Heads applied to style-shuffled features. `fv`: (N, T, C, H, W); `fa`: (N, C, L).
pub fn mmssa_predict<'g, S: Scalar>(
    heads: &Heads,
    p: &Bound<'g, S>,
    fv: &Var<'g, S>,
    fa: &Var<'g, S>,
    plan: &BatchShufflePlan,
) -> Result<ModalityOutput<'g, S>> {
    plan.validate()?;
    let sv = shuffle_within(fv, &plan.style_perm, &plan.omega, 1, false)?;
    let sa = shuffle_within(fa, &plan.style_perm, &plan.omega, 0, false)?;
    modality_predict(heads, p, &sv, &sa)
}

/// Style shuffle of a batch against a permutation of itself: each sample keeps
/// its content and mixes in its partner's style, or with `swap_content` takes
/// its partner's content under its own style. A sample paired with itself is
/// an exact identity and passes through untouched rather than through a
/// normalise/denormalise round trip.
fn shuffle_within<'g, S: Scalar>(
    f: &Var<'g, S>,
    perm: &[usize],
    omega: &[f64],
    channel_axis: usize,
    swap_content: bool,
) -> Result<Var<'g, S>> {
    let partner = f.gather(perm)?;
    let out = if swap_content {
        style_shuffle_batch(&partner, f, omega, channel_axis)?
    } else {
        style_shuffle_batch(f, &partner, omega, channel_axis)?
    };
    if perm.iter().enumerate().all(|(i, &j)| i != j) {
        return Ok(out);
    }
    let dims = f.dims();
    let per = f.numel() / dims[0];
    let mask = |keep: bool| -> Result<Var<'g, S>> {
        let data = (0..f.numel())
            .map(|k| S::from_f64(if (perm[k / per] == k / per) == keep { 1.0 } else { 0.0 }))
            .collect();
        Ok(f.graph().constant(Tensor::new(&dims, data)?))
    };
    out.mul(&mask(false)?)?.add(&f.mul(&mask(true)?)?)
}

/// Heads applied to unshuffled features.
pub fn modality_predict<'g, S: Scalar>(
    heads: &Heads,
    p: &Bound<'g, S>,
    fv: &Var<'g, S>,
    fa: &Var<'g, S>,
) -> Result<ModalityOutput<'g, S>> {
    let z_v = heads.h_v.forward(p, fv)?;
    let z_a = heads.h_a.forward(p, fa)?;
    Ok(ModalityOutput {
        prob_v: prob_real(&heads.p_v.forward(p, &z_v, 1)?)?,
        prob_a: prob_real(&heads.p_a.forward(p, &z_a, 1)?)?,
        z_v,
        z_a,
    })
}

/// Whole-video predictions on re-paired latents and the rewritten labels.
pub fn lsa_predict<'g, S: Scalar>(
    heads: &Heads,
    p: &Bound<'g, S>,
    z_v: &Var<'g, S>,
    z_a: &Var<'g, S>,
    perm: &[usize],
    y_w: &[f64],
) -> Result<(Var<'g, S>, Vec<f64>)> {
    if perm.len() != y_w.len() || z_v.dims()[0] != perm.len() {
        return Err(shape_err!(
            "latent shuffle over {} samples with {} labels",
            perm.len(),
            y_w.len()
        ));
    }
    let shuffled = z_a.gather(perm)?;
    let pred = prob_real(&heads.whole_logits(p, z_v, &shuffled)?)?;
    Ok((pred, lsa_labels(y_w, perm)))
}

/// `CE(ŷv, yv) + CE(ŷa, ya) + CE(ŷw, yw) [+ β·CE(ỹw, LSA(yw))]`.
#[allow(clippy::too_many_arguments)]
pub fn classification_loss<'g, S: Scalar>(
    prob_v: &Var<'g, S>,
    prob_a: &Var<'g, S>,
    prob_w: &Var<'g, S>,
    labels: &[LabelTriple],
    lsa: Option<(&Var<'g, S>, &[f64])>,
    beta: f64,
) -> Result<Var<'g, S>> {
    let [yv, ya, yw] = label_columns(labels);
    let base = bce(prob_v, &yv)?.add(&bce(prob_a, &ya)?)?.add(&bce(prob_w, &yw)?)?;
    match lsa {
        Some((pred, y)) => base.add(&bce(pred, y)?.scale(beta)),
        None => Ok(base),
    }
}

/// Adversarial heads on features carrying the content of the style partner
/// and the sample's own style, pushed toward the ½ pseudo-label.
pub fn adversarial_loss<'g, S: Scalar>(
    heads: &Heads,
    p: &Bound<'g, S>,
    fv: &Var<'g, S>,
    fa: &Var<'g, S>,
    style_perm: &[usize],
) -> Result<Var<'g, S>> {
    let zeros = vec![0.0; style_perm.len()];
    let sv = shuffle_within(fv, style_perm, &zeros, 1, true)?;
    let sa = shuffle_within(fa, style_perm, &zeros, 0, true)?;
    let pv = prob_real(&heads.p_v_adv.forward(p, &heads.h_v_adv.forward(p, &sv)?, 1)?)?;
    let pa = prob_real(&heads.p_a_adv.forward(p, &heads.h_a_adv.forward(p, &sa)?, 1)?)?;
    half_label_ce(&pv)?.add(&half_label_ce(&pa)?)
}

/// `Contrast(yv, Zv) + Contrast(ya, Za)`.
pub fn contrast_loss<'g, S: Scalar>(
    labels: &[LabelTriple],
    z_v: &Var<'g, S>,
    z_a: &Var<'g, S>,
    alpha: f64,
) -> Result<Var<'g, S>> {
    let [yv, ya, _] = label_columns(labels);
    contrast(&yv, z_v, alpha)?.add(&contrast(&ya, z_a, alpha)?)
}

/// `γ1·cls + γ2·adv + γ3·con`; absent terms contribute nothing.
pub fn total_loss<'g, S: Scalar>(
    cls: &Var<'g, S>,
    adv: Option<&Var<'g, S>>,
    con: Option<&Var<'g, S>>,
    gamma: [f64; 3],
) -> Result<Var<'g, S>> {
    let mut total = cls.scale(gamma[0]);
    if let Some(a) = adv {
        total = total.add(&a.scale(gamma[1]))?;
    }
    if let Some(c) = con {
        total = total.add(&c.scale(gamma[2]))?;
    }
    Ok(total)
}

/// Scalar values of the loss terms of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub cls: f64,
    pub adv: f64,
    pub con: f64,
}

impl LossParts {
    pub fn total(&self, gamma: [f64; 3]) -> f64 {
        gamma[0] * self.cls + gamma[1] * self.adv + gamma[2] * self.con
    }
}

/// The assembled objective of one batch.
pub struct Objective<'g, S> {
    pub total: Var<'g, S>,
    pub cls: Var<'g, S>,
    pub adv: Option<Var<'g, S>>,
    pub con: Option<Var<'g, S>>,
    /// Whole-video real probabilities on the true pairing.
    pub prob_w: Var<'g, S>,
}

impl<S: Scalar> Objective<'_, S> {
    pub fn parts(&self) -> LossParts {
        let v = |x: &Var<'_, S>| x.value().item().as_f64();
        LossParts {
            cls: v(&self.cls),
            adv: self.adv.as_ref().map_or(0.0, v),
            con: self.con.as_ref().map_or(0.0, v),
        }
    }
}

/// Full training objective on batched backbone features.
pub fn training_objective<'g, S: Scalar>(
    heads: &Heads,
    p: &Bound<'g, S>,
    fv: &Var<'g, S>,
    fa: &Var<'g, S>,
    labels: &[LabelTriple],
    plan: &BatchShufflePlan,
    cfg: &LossConfig,
) -> Result<Objective<'g, S>> {
    if labels.len() != plan.len() || fv.dims()[0] != labels.len() {
        return Err(shape_err!(
            "batch of {} features, {} labels, plan for {}",
            fv.dims()[0],
            labels.len(),
            plan.len()
        ));
    }
    let t = cfg.toggles;
    let m = if t.mmssa {
        mmssa_predict(heads, p, fv, fa, plan)?
    } else {
        modality_predict(heads, p, fv, fa)?
    };
    let prob_w = prob_real(&heads.whole_logits(p, &m.z_v, &m.z_a)?)?;
    let [_, _, yw] = label_columns(labels);
    let lsa = if t.lsa {
        Some(lsa_predict(heads, p, &m.z_v, &m.z_a, &plan.latent_perm, &yw)?)
    } else {
        None
    };
    let cls = classification_loss(
        &m.prob_v,
        &m.prob_a,
        &prob_w,
        labels,
        lsa.as_ref().map(|(v, y)| (v, y.as_slice())),
        cfg.beta,
    )?;
    let adv = if t.adversarial {
        Some(adversarial_loss(heads, p, fv, fa, &plan.style_perm)?)
    } else {
        None
    };
    let con = if t.contrast {
        Some(contrast_loss(labels, &m.z_v, &m.z_a, cfg.alpha)?)
    } else {
        None
    };
    let total = total_loss(&cls, adv.as_ref(), con.as_ref(), cfg.gamma)?;
    Ok(Objective {
        total,
        cls,
        adv,
        con,
        prob_w,
    })
}
