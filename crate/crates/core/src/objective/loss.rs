//! Loss terms: binary cross-entropy, the LSA label rewrite, the ½-label
//! adversarial term and the cosine contrast loss.

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tensor, Var};

/// Probabilities are clamped to `[P_EPS, 1 − P_EPS]` before the logarithm.
pub const P_EPS: f64 = 1e-7;
/// Added under the square root of latent norms.
pub const NORM_EPS: f64 = 1e-12;

fn labels_const<'g, S: Scalar>(p: &Var<'g, S>, y: &[f64]) -> Result<Var<'g, S>> {
    if p.dims() != [y.len()] {
        return Err(shape_err!("{} labels for predictions {:?}", y.len(), p.dims()));
    }
    Ok(p.graph()
        .constant(Tensor::from_vec(y.iter().map(|&v| S::from_f64(v)).collect())))
}

/// `mean_i −(y ln ŷ + (1 − y) ln(1 − ŷ))` over predictions of shape (N).
pub fn bce<'g, S: Scalar>(p: &Var<'g, S>, y: &[f64]) -> Result<Var<'g, S>> {
    let yt = labels_const(p, y)?;
    let yc = labels_const(p, &y.iter().map(|v| 1.0 - v).collect::<Vec<_>>())?;
    let pc = p.clamp(P_EPS, 1.0 - P_EPS);
    let pos = yt.mul(&pc.ln())?;
    let neg = yc.mul(&pc.neg().add_scalar(1.0).ln())?;
    Ok(pos.add(&neg)?.mean().neg())
}

/// Cross-entropy against the uninformative ½ pseudo-label.
pub fn half_label_ce<'g, S: Scalar>(p: &Var<'g, S>) -> Result<Var<'g, S>> {
    let n = p.dims().first().copied().unwrap_or(0);
    bce(p, &vec![0.5; n])
}

/// Labels after latent shuffling: kept where the pair is the sample's own,
/// zero (fake) otherwise.
pub fn lsa_labels(y_w: &[f64], perm: &[usize]) -> Vec<f64> {
    y_w.iter()
        .zip(perm)
        .enumerate()
        .map(|(i, (&y, &j))| if i == j { y } else { 0.0 })
        .collect()
}

/// Row-normalised latents, `z / sqrt(|z|² + NORM_EPS)`.
fn normalize_rows<'g, S: Scalar>(z: &Var<'g, S>) -> Result<Var<'g, S>> {
    let d = z.dims()[1];
    let norm = z.square().sum_last().add_scalar(NORM_EPS).sqrt();
    z.div(&norm.expand_last(d)?)
}

/// Cosine contrast loss over all N² ordered pairs of a (N, D) latent batch.
pub fn contrast<'g, S: Scalar>(y: &[f64], z: &Var<'g, S>, alpha: f64) -> Result<Var<'g, S>> {
    let dims = z.dims();
    if dims.len() != 2 || dims[0] != y.len() {
        return Err(shape_err!("contrast: {} labels for latents {:?}", y.len(), dims));
    }
    let n = y.len();
    let zn = normalize_rows(z)?;
    let sim = zn.matmul(&zn.transpose()?)?;
    let g = z.graph();
    let same = Tensor::from_fn(&[n, n], |k| S::from_f64(if y[k / n] == y[k % n] { 1.0 } else { 0.0 }));
    let diff = Tensor::from_fn(&[n, n], |k| S::one() - same.data()[k]);
    let (same, diff) = (g.constant(same), g.constant(diff));
    let pull = same.mul(&sim.neg().add_scalar(1.0))?;
    let push = diff.mul(&sim.add_scalar(-alpha).relu())?;
    Ok(pull.add(&push)?.sum().scale(1.0 / (n * n) as f64))
}
