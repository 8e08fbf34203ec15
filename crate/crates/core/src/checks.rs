//! Finite-difference gradient suite over the layers, loss terms and a
//! tiny end-to-end composite, each repeated over many random seeds.

use crate::error::Result;
use crate::model::{
    AudioHead, Bound, Conv1d, Conv2d, DepthwiseConv1d, DepthwiseConv2d, Detector, Heads, Linear, ModelConfig,
    ParamBuilder, ParamStore, Saavm, StageShape, VisualHead, Vpm,
};
use crate::objective::{
    adversarial_loss, bce, contrast, contrast_loss, half_label_ce, style_shuffle_batch, training_objective,
    BatchShufflePlan, LabelTriple, LossConfig, Toggles,
};
use crate::tensor::{grad_check_subset, GradCheckReport, Graph, RngState, Tensor, Var};

pub const FD_EPS: f64 = 1e-5;
/// Tolerance for single layers and loss terms.
pub const LAYER_TOL: f64 = 1e-4;
/// Tolerance for the end-to-end composite.
pub const COMPOSITE_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradRow {
    pub name: String,
    pub seeds: u64,
    pub max_rel_err: f64,
    pub tol: f64,
    pub checked: usize,
}

impl GradRow {
    pub fn passes(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

fn rand_t(rng: &mut RngState, dims: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.uniform(-1.0, 1.0))
}

/// `sum(R ⊙ y)` for a fixed random `R`: a generic scalar of any output.
fn project<'g>(y: &Var<'g, f64>, rng: &mut RngState) -> Result<Var<'g, f64>> {
    let r = y.graph().constant(rand_t(rng, &y.dims()));
    Ok(y.mul(&r)?.sum())
}

/// Runs `case` for seeds `0..seeds` and keeps the worst error.
fn row(name: &str, seeds: u64, tol: f64, mut case: impl FnMut(u64) -> Result<GradCheckReport>) -> Result<GradRow> {
    let mut out = GradRow {
        name: name.to_string(),
        seeds,
        max_rel_err: 0.0,
        tol,
        checked: 0,
    };
    for seed in 0..seeds {
        let rep = case(seed)?;
        out.max_rel_err = out.max_rel_err.max(rep.max_rel_err);
        out.checked += rep.checked;
    }
    Ok(out)
}

/// Freshly initialised parameters with every entry jittered, so zero-initialised
/// biases and embeddings also carry signal.
fn jittered<L>(seed: u64, build: impl FnOnce(&mut ParamBuilder<'_, f64>) -> L) -> (L, Vec<Tensor<f64>>) {
    let mut store = ParamStore::new();
    let mut rng = RngState::new(seed);
    let layer = build(&mut ParamBuilder::new(&mut store, Some(&mut rng)));
    let mut jit = RngState::new(seed).derive(&[7]);
    let tensors = store
        .tensors()
        .iter()
        .map(|t| Tensor::from_fn(t.dims(), |i| t.data()[i] + jit.uniform(-0.1, 0.1)))
        .collect();
    (layer, tensors)
}

/// Gradient check of a layer with respect to its parameters and its input(s).
fn layer_case<L>(
    seed: u64,
    build: impl FnOnce(&mut ParamBuilder<'_, f64>) -> L,
    input_dims: &[&[usize]],
    fwd: impl for<'g> Fn(&L, &Bound<'g, f64>, &[Var<'g, f64>]) -> Result<Vec<Var<'g, f64>>>,
) -> Result<GradCheckReport> {
    let (layer, mut inputs) = jittered(seed, build);
    let n = inputs.len();
    let mut rng = RngState::new(seed).derive(&[8]);
    for d in input_dims {
        inputs.push(rand_t(&mut rng, d));
    }
    grad_check_subset(
        |_, xs| {
            let p = Bound::from_vars(xs[..n].to_vec());
            let outs = fwd(&layer, &p, &xs[n..])?;
            let mut r = RngState::new(seed).derive(&[9]);
            let mut total = project(&outs[0], &mut r)?;
            for o in &outs[1..] {
                total = total.add(&project(o, &mut r)?)?;
            }
            Ok(total)
        },
        &inputs,
        FD_EPS,
        None,
    )
}

fn labels4() -> [LabelTriple; 4] {
    [
        LabelTriple::new(true, true),
        LabelTriple::new(false, true),
        LabelTriple::new(true, false),
        LabelTriple::new(false, false),
    ]
}

/// A scalar loss of the heads on visual and audio features.
type HeadsLoss<'a> = dyn for<'g> Fn(&Heads, &Bound<'g, f64>, &Var<'g, f64>, &Var<'g, f64>) -> Result<Var<'g, f64>> + 'a;

/// Every check of the suite over `seeds` seeds.
pub fn gradient_suite(seeds: u64) -> Result<Vec<GradRow>> {
    let mut rows = Vec::new();
    let t = LAYER_TOL;

    rows.push(row("linear", seeds, t, |s| {
        layer_case(
            s,
            |b| Linear::new(b, "l", 4, 3, true),
            &[&[2, 4, 3]],
            |l, p, x| Ok(vec![l.forward(p, &x[0], 1)?]),
        )
    })?);
    rows.push(row("conv2d (stride 2)", seeds, t, |s| {
        layer_case(
            s,
            |b| Conv2d::new(b, "c", 2, 3, 3, 2, 1),
            &[&[2, 2, 6, 6]],
            |l, p, x| Ok(vec![l.forward(p, &x[0])?]),
        )
    })?);
    rows.push(row("depthwise conv2d", seeds, t, |s| {
        layer_case(
            s,
            |b| DepthwiseConv2d::new(b, "c", 3, 5),
            &[&[1, 3, 6, 6]],
            |l, p, x| Ok(vec![l.forward(p, &x[0])?]),
        )
    })?);
    rows.push(row("conv1d (stride 2)", seeds, t, |s| {
        layer_case(
            s,
            |b| Conv1d::new(b, "c", 2, 3, 5, 2, 2),
            &[&[2, 2, 11]],
            |l, p, x| Ok(vec![l.forward(p, &x[0])?]),
        )
    })?);
    rows.push(row("depthwise conv1d", seeds, t, |s| {
        layer_case(
            s,
            |b| DepthwiseConv1d::new(b, "c", 3, 3),
            &[&[2, 3, 7]],
            |l, p, x| Ok(vec![l.forward(p, &x[0])?]),
        )
    })?);
    rows.push(row("vpm", seeds, t, |s| {
        layer_case(
            s,
            |b| Vpm::new(b, "vpm", 2, 3, 2),
            &[&[2, 3, 5, 5]],
            |l, p, x| Ok(vec![l.forward(p, &x[0])?]),
        )
    })?);
    let shape = StageShape {
        channels: 3,
        height: 4,
        width: 4,
        audio_len: 8,
        windows: 4,
        token_dim: 4,
        depth: 1,
    };
    rows.push(row("saavm", seeds, t, |s| {
        layer_case(
            s,
            |b| Saavm::new(b, "saavm", 2, 2, 1, shape),
            &[&[2, 3, 4, 4], &[3, 8]],
            |l, p, x| {
                let (v, a) = l.forward(p, &x[0], &x[1])?;
                Ok(vec![v, a])
            },
        )
    })?);
    rows.push(row("visual head", seeds, t, |s| {
        layer_case(
            s,
            |b| VisualHead::new(b, "h", 3),
            &[&[2, 2, 3, 3, 3]],
            |l, p, x| Ok(vec![l.forward(p, &x[0])?]),
        )
    })?);
    rows.push(row("audio head", seeds, t, |s| {
        layer_case(
            s,
            |b| AudioHead::new(b, "h", 3),
            &[&[2, 3, 6]],
            |l, p, x| Ok(vec![l.forward(p, &x[0])?]),
        )
    })?);

    rows.push(row("style shuffle", seeds, t, |s| {
        let mut rng = RngState::new(s);
        let omega: Vec<f64> = (0..3).map(|_| rng.uniform(0.0, 1.0)).collect();
        let xs = [rand_t(&mut rng, &[3, 2, 2, 4]), rand_t(&mut rng, &[3, 2, 2, 4])];
        grad_check_subset(
            |_, x| {
                project(
                    &style_shuffle_batch(&x[0], &x[1], &omega, 1)?,
                    &mut RngState::new(s).derive(&[9]),
                )
            },
            &xs,
            FD_EPS,
            None,
        )
    })?);
    rows.push(row("bce", seeds, t, |s| {
        let mut rng = RngState::new(s);
        let y: Vec<f64> = (0..5).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }).collect();
        let p = Tensor::from_fn(&[5], |_| rng.uniform(0.05, 0.95));
        grad_check_subset(|_, x| bce(&x[0], &y), &[p], FD_EPS, None)
    })?);
    rows.push(row("half-label ce", seeds, t, |s| {
        let mut rng = RngState::new(s);
        let p = Tensor::from_fn(&[5], |_| rng.uniform(0.05, 0.95));
        grad_check_subset(|_, x| half_label_ce(&x[0]), &[p], FD_EPS, None)
    })?);
    rows.push(row("contrast", seeds, t, |s| {
        let mut rng = RngState::new(s);
        // two members per class at least, so every row has an active positive pair
        let mut y = vec![1.0, 1.0, 0.0, 0.0];
        y.extend((0..2).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }));
        let z = rand_t(&mut rng, &[6, 4]);
        grad_check_subset(|_, x| contrast(&y, &x[0], 0.4), &[z], FD_EPS, None)
    })?);

    // loss terms through the heads, w.r.t. head parameters and features
    let heads_case = |s: u64, loss: &HeadsLoss<'_>| {
        let (heads, mut inputs) = jittered(s, |b| Heads::new(b, 4));
        let n = inputs.len();
        let mut rng = RngState::new(s).derive(&[8]);
        inputs.push(rand_t(&mut rng, &[4, 2, 4, 2, 2]));
        inputs.push(Tensor::from_fn(&[4, 4, 3], |_| rng.uniform(-1.0, 1.0) * 2.0 + 0.3));
        grad_check_subset(
            |_, x| loss(&heads, &Bound::from_vars(x[..n].to_vec()), &x[n], &x[n + 1]),
            &inputs,
            FD_EPS,
            Some(12),
        )
    };
    rows.push(row("adversarial loss", seeds, t, |s| {
        let perm = RngState::new(s).permutation(4);
        heads_case(s, &|h, p, fv, fa| adversarial_loss(h, p, fv, fa, &perm))
    })?);
    rows.push(row("contrast loss (heads)", seeds, t, |s| {
        heads_case(s, &|h, p, fv, fa| {
            contrast_loss(&labels4(), &h.h_v.forward(p, fv)?, &h.h_a.forward(p, fa)?, 0.4)
        })
    })?);
    for (name, toggles) in [
        ("objective (all terms)", Toggles::ALL),
        ("objective (no mmssa)", Toggles::ablation('c')?),
        ("objective (no lsa)", Toggles::ablation('b')?),
    ] {
        rows.push(row(name, seeds, t, |s| {
            let plan = BatchShufflePlan::sample(4, &mut RngState::new(s).derive(&[3]));
            let cfg = LossConfig::with_toggles(toggles);
            heads_case(s, &|h, p, fv, fa| {
                Ok(training_objective(h, p, fv, fa, &labels4(), &plan, &cfg)?.total)
            })
        })?);
    }

    rows.push(row("end-to-end (tiny)", seeds, COMPOSITE_TOL, tiny_composite)?);
    Ok(rows)
}

/// A random projection of the backbone outputs and head logits of one tiny
/// clip, w.r.t. a subset of every parameter tensor and both inputs.
pub fn tiny_composite(seed: u64) -> Result<GradCheckReport> {
    let cfg = ModelConfig::tiny();
    let mut model = Detector::<f64>::new(cfg.clone(), seed)?;
    let mut jit = RngState::new(seed).derive(&[7]);
    for t in model.params_mut().tensors_mut() {
        for x in t.data_mut() {
            *x += jit.uniform(-0.1, 0.1);
        }
    }
    let n = model.params().len();
    let mut inputs = model.params().tensors().to_vec();
    let mut rng = RngState::new(seed).derive(&[8]);
    inputs.push(Tensor::from_fn(&cfg.visual_input_dims(), |_| rng.uniform(0.0, 1.0)));
    inputs.push(rand_t(&mut rng, &cfg.audio_input_dims()));
    grad_check_subset(
        |g: &Graph<f64>, x| {
            let p = Bound::from_vars(x[..n].to_vec());
            let (fv, fa) = model.backbone(&p, &x[n], &x[n + 1])?;
            let (bv, ba) = model.stack(g, &[(fv, fa)])?;
            let out = model.classify(&p, &bv, &ba)?;
            let mut r = RngState::new(seed).derive(&[9]);
            let mut total = project(&fv, &mut r)?.add(&project(&fa, &mut r)?)?;
            for y in [&out.logits_v, &out.logits_a, &out.logits_w] {
                total = total.add(&project(y, &mut r)?)?;
            }
            Ok(total)
        },
        &inputs,
        FD_EPS,
        Some(2),
    )
}
