//! Per-channel style statistics and style shuffle.
//!
//! ```text
//! SS(Fi, Fj, ω) = f(σi, σj, ω) · (Fi − μi) / σi + f(μi, μj, ω)
//! f(si, sj, ω)  = ω·si + (1 − ω)·sj
//! ```
//! μ, σ are taken per channel over every non-channel axis; σ uses the
//! population variance with [`STYLE_EPS`] inside the root.

use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tensor, Var};

pub const STYLE_EPS: f64 = 1e-5;

/// Per-channel mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// (outer, C, inner) extents around `axis`.
fn around(dims: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= dims.len() {
        return Err(shape_err!("channel axis {axis} out of range for {:?}", dims));
    }
    let outer = dims[..axis].iter().product();
    let inner = dims[axis + 1..].iter().product();
    if outer * inner == 0 || outer * inner < 1 {
        return Err(shape_err!("no non-channel elements in {:?}", dims));
    }
    Ok((outer, dims[axis], inner))
}

pub fn style_stats<S: Scalar>(f: &Tensor<S>, channel_axis: usize) -> Result<StyleStats> {
    let (outer, c, inner) = around(f.dims(), channel_axis)?;
    let m = (outer * inner) as f64;
    let d = f.data();
    let mut mean = vec![0.0; c];
    let mut sq = vec![0.0; c];
    for o in 0..outer {
        for (ch, mu) in mean.iter_mut().enumerate() {
            for x in &d[(o * c + ch) * inner..(o * c + ch + 1) * inner] {
                *mu += x.as_f64();
            }
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    for o in 0..outer {
        for ch in 0..c {
            for x in &d[(o * c + ch) * inner..(o * c + ch + 1) * inner] {
                let e = x.as_f64() - mean[ch];
                sq[ch] += e * e;
            }
        }
    }
    let std = sq.iter().map(|s| (s / m + STYLE_EPS).sqrt()).collect();
    Ok(StyleStats { mean, std })
}

/// Rows of a (R, M) matrix shuffled row-wise: row r takes its content from
/// `content[r]` and mixes its style with `style[r]` by `omega[r]`.
pub fn shuffle_rows<'g, S: Scalar>(content: &Var<'g, S>, style: &Var<'g, S>, omega: &[f64]) -> Result<Var<'g, S>> {
    let (cd, sd) = (content.dims(), style.dims());
    if cd.len() != 2 || cd != sd || omega.len() != cd[0] {
        return Err(shape_err!(
            "style shuffle: content {:?}, style {:?}, {} mixing weights",
            cd,
            sd,
            omega.len()
        ));
    }
    let m = cd[1];
    let g = content.graph();
    let stats = |x: &Var<'g, S>| -> Result<(Var<'g, S>, Var<'g, S>)> {
        let mu = x.mean_last();
        let sigma = x.var_last()?.add_scalar(STYLE_EPS).sqrt();
        Ok((mu, sigma))
    };
    let (mu_i, sd_i) = stats(content)?;
    let (mu_j, sd_j) = stats(style)?;
    let w = g.constant(Tensor::from_vec(omega.iter().map(|&o| S::from_f64(o)).collect()));
    let w_c = g.constant(Tensor::from_vec(omega.iter().map(|&o| S::from_f64(1.0 - o)).collect()));
    let mix = |a: &Var<'g, S>, b: &Var<'g, S>| -> Result<Var<'g, S>> { a.mul(&w)?.add(&b.mul(&w_c)?) };
    let sd_mix = mix(&sd_i, &sd_j)?;
    let mu_mix = mix(&mu_i, &mu_j)?;
    let normed = content.sub(&mu_i.expand_last(m)?)?.div(&sd_i.expand_last(m)?)?;
    normed.mul(&sd_mix.expand_last(m)?)?.add(&mu_mix.expand_last(m)?)
}

/// (N, A, C, B) batch → (N·C, A·B) channel rows, with the inverse.
fn to_rows<'g, S: Scalar>(x: &Var<'g, S>, channel_axis: usize) -> Result<Var<'g, S>> {
    let dims = x.dims();
    let (n, rest) = (dims[0], &dims[1..]);
    let (a, c, b) = around(rest, channel_axis)?;
    x.reshape(&[n, a, c, b])?
        .permute(&[0, 2, 1, 3])?
        .reshape(&[n * c, a * b])
}

fn from_rows<'g, S: Scalar>(rows: &Var<'g, S>, dims: &[usize], channel_axis: usize) -> Result<Var<'g, S>> {
    let (a, c, b) = around(&dims[1..], channel_axis)?;
    rows.reshape(&[dims[0], c, a, b])?.permute(&[0, 2, 1, 3])?.reshape(dims)
}

/// Batched style shuffle: sample `i` keeps the content of `content[i]` and
/// mixes its style with `style[i]` by `omega[i]`. `channel_axis` indexes the
/// per-sample dims (1 for visual (T, C, H, W), 0 for audio (C, L)).
pub fn style_shuffle_batch<'g, S: Scalar>(
    content: &Var<'g, S>,
    style: &Var<'g, S>,
    omega: &[f64],
    channel_axis: usize,
) -> Result<Var<'g, S>> {
    let dims = content.dims();
    if dims != style.dims() || dims.len() < 2 || omega.len() != dims[0] {
        return Err(shape_err!(
            "style shuffle: content {:?}, style {:?}, {} mixing weights",
            dims,
            style.dims(),
            omega.len()
        ));
    }
    let c = dims[1 + channel_axis];
    let row_omega: Vec<f64> = omega.iter().flat_map(|&o| std::iter::repeat_n(o, c)).collect();
    let out = shuffle_rows(
        &to_rows(content, channel_axis)?,
        &to_rows(style, channel_axis)?,
        &row_omega,
    )?;
    from_rows(&out, &dims, channel_axis)
}

/// Single-sample style shuffle `SS(Fi, Fj, ω)`.
pub fn style_shuffle<'g, S: Scalar>(
    f_i: &Var<'g, S>,
    f_j: &Var<'g, S>,
    omega: f64,
    channel_axis: usize,
) -> Result<Var<'g, S>> {
    let mut d = f_i.dims();
    if d != f_j.dims() {
        return Err(shape_err!("style shuffle: {:?} vs {:?}", d, f_j.dims()));
    }
    d.insert(0, 1);
    let out = style_shuffle_batch(&f_i.reshape(&d)?, &f_j.reshape(&d)?, &[omega], channel_axis)?;
    out.reshape(&f_i.dims())
}
