//! Raw forward/backward loops over flat row-major buffers. Shapes are
//! validated by the caller in `graph.rs`; these functions assume them.

use crate::error::{shape_err, Result};

use super::scalar::Scalar;

#[inline]
fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv = *yv + alpha * xv;
    }
}

#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

// ---------------------------------------------------------------------------
// Axis-wise linear map

/// `y[o, :, j] = sum_i w[o, i] * x[o_, i, j] + b[o]` over an (outer, in, inner) view.
pub(crate) fn linear_forward<S: Scalar>(
    x: &[S],
    w: &[S],
    b: Option<&[S]>,
    outer: usize,
    n_in: usize,
    n_out: usize,
    inner: usize,
) -> Vec<S> {
    let mut y = vec![S::zero(); outer * n_out * inner];
    for r in 0..outer {
        let xr = &x[r * n_in * inner..(r + 1) * n_in * inner];
        let yr = &mut y[r * n_out * inner..(r + 1) * n_out * inner];
        if inner == 1 {
            for o in 0..n_out {
                let bias = b.map_or(S::zero(), |b| b[o]);
                yr[o] = bias + dot(&w[o * n_in..(o + 1) * n_in], xr);
            }
        } else {
            for o in 0..n_out {
                let yo = &mut yr[o * inner..(o + 1) * inner];
                if let Some(b) = b {
                    yo.iter_mut().for_each(|v| *v = b[o]);
                }
                for i in 0..n_in {
                    axpy(w[o * n_in + i], &xr[i * inner..(i + 1) * inner], yo);
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward<S: Scalar>(
    x: &[S],
    w: &[S],
    g: &[S],
    outer: usize,
    n_in: usize,
    n_out: usize,
    inner: usize,
    mut dx: Option<&mut [S]>,
    mut dw: Option<&mut [S]>,
    mut db: Option<&mut [S]>,
) {
    for r in 0..outer {
        let xr = &x[r * n_in * inner..(r + 1) * n_in * inner];
        let gr = &g[r * n_out * inner..(r + 1) * n_out * inner];
        if inner == 1 {
            for o in 0..n_out {
                let go = gr[o];
                if let Some(dx) = dx.as_deref_mut() {
                    axpy(go, &w[o * n_in..(o + 1) * n_in], &mut dx[r * n_in..(r + 1) * n_in]);
                }
                if let Some(dw) = dw.as_deref_mut() {
                    axpy(go, xr, &mut dw[o * n_in..(o + 1) * n_in]);
                }
                if let Some(db) = db.as_deref_mut() {
                    db[o] = db[o] + go;
                }
            }
        } else {
            for o in 0..n_out {
                let go = &gr[o * inner..(o + 1) * inner];
                if let Some(db) = db.as_deref_mut() {
                    db[o] = db[o] + go.iter().copied().sum::<S>();
                }
                for i in 0..n_in {
                    let xi = &xr[i * inner..(i + 1) * inner];
                    if let Some(dw) = dw.as_deref_mut() {
                        dw[o * n_in + i] = dw[o * n_in + i] + dot(go, xi);
                    }
                    if let Some(dx) = dx.as_deref_mut() {
                        let base = r * n_in * inner + i * inner;
                        axpy(w[o * n_in + i], go, &mut dx[base..base + inner]);
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Matrix product

pub(crate) fn matmul_forward<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    for i in 0..m {
        let ci = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(a[i * k + p], &b[p * n..(p + 1) * n], ci);
        }
    }
    c
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul_backward<S: Scalar>(
    a: &[S],
    b: &[S],
    g: &[S],
    m: usize,
    k: usize,
    n: usize,
    da: Option<&mut [S]>,
    db: Option<&mut [S]>,
) {
    if let Some(da) = da {
        for i in 0..m {
            let gi = &g[i * n..(i + 1) * n];
            for p in 0..k {
                da[i * k + p] = da[i * k + p] + dot(gi, &b[p * n..(p + 1) * n]);
            }
        }
    }
    if let Some(db) = db {
        for i in 0..m {
            let gi = &g[i * n..(i + 1) * n];
            for p in 0..k {
                axpy(a[i * k + p], gi, &mut db[p * n..(p + 1) * n]);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Grouped 2-D cross-correlation. 1-D convolutions use kh = 1.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub groups: usize,
    pub ho: usize,
    pub wo: usize,
}

/// Output extent of a strided, padded window; floor rounding.
pub fn conv_out_extent(extent: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(shape_err!("stride must be positive"));
    }
    if extent + 2 * pad < k {
        return Err(shape_err!(
            "kernel {k} exceeds padded extent {} (extent {extent}, pad {pad})",
            extent + 2 * pad
        ));
    }
    Ok((extent + 2 * pad - k) / stride + 1)
}

/// Output positions `o` whose input tap `o*s + k - p` lies in `[0, n)`.
#[inline]
fn valid_range(k: usize, s: usize, p: usize, n: usize, n_out: usize) -> (usize, usize) {
    let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
    let hi = if n + p > k {
        ((n + p - k - 1) / s + 1).min(n_out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

impl ConvGeom {
    fn cig(&self) -> usize {
        self.c_in / self.groups
    }

    fn cog(&self) -> usize {
        self.c_out / self.groups
    }

    pub fn out_len(&self) -> usize {
        self.batch * self.c_out * self.ho * self.wo
    }
}

pub(crate) fn conv_forward<S: Scalar>(x: &[S], w: &[S], b: Option<&[S]>, gm: &ConvGeom) -> Vec<S> {
    let (hw, ohw) = (gm.h * gm.w, gm.ho * gm.wo);
    let (cig, cog) = (gm.cig(), gm.cog());
    let mut y = vec![S::zero(); gm.out_len()];
    let xr: Vec<(usize, usize)> = (0..gm.kw)
        .map(|kx| valid_range(kx, gm.sw, gm.pw, gm.w, gm.wo))
        .collect();
    let yr: Vec<(usize, usize)> = (0..gm.kh)
        .map(|ky| valid_range(ky, gm.sh, gm.ph, gm.h, gm.ho))
        .collect();
    for n in 0..gm.batch {
        for co in 0..gm.c_out {
            let grp = co / cog;
            let yp = &mut y[(n * gm.c_out + co) * ohw..(n * gm.c_out + co + 1) * ohw];
            if let Some(b) = b {
                yp.iter_mut().for_each(|v| *v = b[co]);
            }
            for cl in 0..cig {
                let ci = grp * cig + cl;
                let xp = &x[(n * gm.c_in + ci) * hw..(n * gm.c_in + ci + 1) * hw];
                let wk = &w[(co * cig + cl) * gm.kh * gm.kw..(co * cig + cl + 1) * gm.kh * gm.kw];
                for ky in 0..gm.kh {
                    let (oy0, oy1) = yr[ky];
                    for kx in 0..gm.kw {
                        let wv = wk[ky * gm.kw + kx];
                        let (ox0, ox1) = xr[kx];
                        if ox0 >= ox1 {
                            continue;
                        }
                        for oy in oy0..oy1 {
                            let iy = oy * gm.sh + ky - gm.ph;
                            let xrow = &xp[iy * gm.w..(iy + 1) * gm.w];
                            let yrow = &mut yp[oy * gm.wo..(oy + 1) * gm.wo];
                            let ix0 = ox0 * gm.sw + kx - gm.pw;
                            if gm.sw == 1 {
                                axpy(wv, &xrow[ix0..ix0 + (ox1 - ox0)], &mut yrow[ox0..ox1]);
                            } else {
                                for (j, yv) in yrow[ox0..ox1].iter_mut().enumerate() {
                                    *yv = *yv + wv * xrow[ix0 + j * gm.sw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

pub(crate) fn conv_backward<S: Scalar>(
    x: &[S],
    w: &[S],
    g: &[S],
    gm: &ConvGeom,
    mut dx: Option<&mut [S]>,
    mut dw: Option<&mut [S]>,
    mut db: Option<&mut [S]>,
) {
    let (hw, ohw) = (gm.h * gm.w, gm.ho * gm.wo);
    let (cig, cog) = (gm.cig(), gm.cog());
    let xr: Vec<(usize, usize)> = (0..gm.kw)
        .map(|kx| valid_range(kx, gm.sw, gm.pw, gm.w, gm.wo))
        .collect();
    let yr: Vec<(usize, usize)> = (0..gm.kh)
        .map(|ky| valid_range(ky, gm.sh, gm.ph, gm.h, gm.ho))
        .collect();
    let ksz = gm.kh * gm.kw;
    for n in 0..gm.batch {
        for co in 0..gm.c_out {
            let grp = co / cog;
            let gp = &g[(n * gm.c_out + co) * ohw..(n * gm.c_out + co + 1) * ohw];
            if let Some(db) = db.as_deref_mut() {
                db[co] = db[co] + gp.iter().copied().sum::<S>();
            }
            for cl in 0..cig {
                let ci = grp * cig + cl;
                let xoff = (n * gm.c_in + ci) * hw;
                let xp = &x[xoff..xoff + hw];
                let woff = (co * cig + cl) * ksz;
                for ky in 0..gm.kh {
                    let (oy0, oy1) = yr[ky];
                    for kx in 0..gm.kw {
                        let (ox0, ox1) = xr[kx];
                        if ox0 >= ox1 {
                            continue;
                        }
                        let wv = w[woff + ky * gm.kw + kx];
                        let mut wacc = S::zero();
                        for oy in oy0..oy1 {
                            let iy = oy * gm.sh + ky - gm.ph;
                            let grow = &gp[oy * gm.wo + ox0..oy * gm.wo + ox1];
                            let ix0 = ox0 * gm.sw + kx - gm.pw;
                            if gm.sw == 1 {
                                let xs = &xp[iy * gm.w + ix0..iy * gm.w + ix0 + grow.len()];
                                if dw.is_some() {
                                    wacc = wacc + dot(grow, xs);
                                }
                                if let Some(dx) = dx.as_deref_mut() {
                                    let base = xoff + iy * gm.w + ix0;
                                    axpy(wv, grow, &mut dx[base..base + grow.len()]);
                                }
                            } else {
                                for (j, &gv) in grow.iter().enumerate() {
                                    let ix = iy * gm.w + ix0 + j * gm.sw;
                                    wacc = wacc + gv * xp[ix];
                                    if let Some(dx) = dx.as_deref_mut() {
                                        dx[xoff + ix] = dx[xoff + ix] + wv * gv;
                                    }
                                }
                            }
                        }
                        if let Some(dw) = dw.as_deref_mut() {
                            let wi = woff + ky * gm.kw + kx;
                            dw[wi] = dw[wi] + wacc;
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Softmax along an axis of an (outer, n, inner) view

pub(crate) fn softmax_forward<S: Scalar>(x: &[S], outer: usize, n: usize, inner: usize) -> Vec<S> {
    let mut y = vec![S::zero(); x.len()];
    for r in 0..outer {
        for j in 0..inner {
            let at = |i: usize| r * n * inner + i * inner + j;
            let mut mx = S::neg_infinity();
            for i in 0..n {
                mx = mx.max(x[at(i)]);
            }
            let mut sum = S::zero();
            for i in 0..n {
                let e = (x[at(i)] - mx).exp();
                y[at(i)] = e;
                sum = sum + e;
            }
            for i in 0..n {
                y[at(i)] = y[at(i)] / sum;
            }
        }
    }
    y
}

pub(crate) fn softmax_backward<S: Scalar>(y: &[S], g: &[S], outer: usize, n: usize, inner: usize, dx: &mut [S]) {
    for r in 0..outer {
        for j in 0..inner {
            let at = |i: usize| r * n * inner + i * inner + j;
            let mut s = S::zero();
            for i in 0..n {
                s = s + g[at(i)] * y[at(i)];
            }
            for i in 0..n {
                let k = at(i);
                dx[k] = dx[k] + y[k] * (g[k] - s);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Axis permutation

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut st = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        st[i] = st[i + 1] * dims[i + 1];
    }
    st
}

/// Output dims and, for every output element in row-major order, nothing else:
/// the copy walks output indices and gathers from permuted input strides.
pub(crate) fn permute<S: Scalar>(x: &[S], dims: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<S>) {
    let in_st = strides(dims);
    let out_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let src_st: Vec<usize> = perm.iter().map(|&p| in_st[p]).collect();
    let rank = out_dims.len();
    let mut out = Vec::with_capacity(x.len());
    if rank == 0 {
        return (out_dims, x.to_vec());
    }
    let mut idx = vec![0usize; rank];
    let last = rank - 1;
    let (ln, ls) = (out_dims[last], src_st[last]);
    loop {
        let base: usize = idx.iter().zip(&src_st).map(|(i, s)| i * s).sum();
        if ls == 1 {
            out.extend_from_slice(&x[base..base + ln]);
        } else {
            out.extend((0..ln).map(|k| x[base + k * ls]));
        }
        // advance all but the last axis
        let mut ax = last;
        loop {
            if ax == 0 {
                return (out_dims, out);
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < out_dims[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
}

pub(crate) fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

// ---------------------------------------------------------------------------
// Sparse resampling along the last axis

/// One tap of a linear resampling map: `y[out] += weight * x[input]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tap {
    pub out: usize,
    pub input: usize,
    pub weight: f64,
}

/// Adaptive average pooling taps: bin `i` covers `[floor(i*n/m), ceil((i+1)*n/m))`.
pub fn adaptive_pool_taps(n_in: usize, n_out: usize) -> Vec<Tap> {
    let mut taps = Vec::new();
    for o in 0..n_out {
        let start = o * n_in / n_out;
        let end = ((o + 1) * n_in).div_ceil(n_out);
        let wgt = 1.0 / (end - start) as f64;
        taps.extend((start..end).map(|i| Tap {
            out: o,
            input: i,
            weight: wgt,
        }));
    }
    taps
}

/// Linear interpolation taps with aligned end points.
pub fn linear_interp_taps(n_in: usize, n_out: usize) -> Vec<Tap> {
    let mut taps = Vec::new();
    for o in 0..n_out {
        if n_in == 1 || n_out == 1 {
            let src = if n_out == 1 { (n_in - 1) as f64 / 2.0 } else { 0.0 };
            push_lerp(&mut taps, o, src, n_in);
            continue;
        }
        let pos = o as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        push_lerp(&mut taps, o, pos, n_in);
    }
    taps
}

fn push_lerp(taps: &mut Vec<Tap>, o: usize, pos: f64, n_in: usize) {
    let lo = (pos.floor() as usize).min(n_in - 1);
    let frac = pos - lo as f64;
    if frac <= 0.0 || lo + 1 >= n_in {
        taps.push(Tap {
            out: o,
            input: lo,
            weight: 1.0,
        });
    } else {
        taps.push(Tap {
            out: o,
            input: lo,
            weight: 1.0 - frac,
        });
        taps.push(Tap {
            out: o,
            input: lo + 1,
            weight: frac,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_matches_brute_force() {
        for n in 1..9usize {
            for k in 0..5usize {
                for s in 1..4usize {
                    for p in 0..4usize {
                        let kk = k + 1;
                        let Ok(n_out) = conv_out_extent(n, kk, s, p) else {
                            continue;
                        };
                        for tap in 0..kk {
                            let (lo, hi) = valid_range(tap, s, p, n, n_out);
                            for o in 0..n_out {
                                let pos = (o * s + tap) as isize - p as isize;
                                let inside = pos >= 0 && (pos as usize) < n;
                                assert_eq!(inside, o >= lo && o < hi, "n={n} k={kk} s={s} p={p} tap={tap} o={o}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn permute_transposes() {
        let x: Vec<f64> = (0..6).map(|v| v as f64).collect();
        let (d, y) = permute(&x, &[2, 3], &[1, 0]);
        assert_eq!(d, vec![3, 2]);
        assert_eq!(y, vec![0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    }

    #[test]
    fn pool_bins_follow_floor_ceil() {
        let taps = adaptive_pool_taps(5, 3);
        // bins [0,2), [1,4), [3,5)
        let bins: Vec<Vec<usize>> = (0..3)
            .map(|o| taps.iter().filter(|t| t.out == o).map(|t| t.input).collect())
            .collect();
        assert_eq!(bins, vec![vec![0, 1], vec![1, 2, 3], vec![3, 4]]);
    }

    #[test]
    fn interp_to_same_extent_is_identity() {
        let taps = linear_interp_taps(4, 4);
        assert_eq!(taps.len(), 4);
        assert!(taps.iter().all(|t| t.out == t.input && t.weight == 1.0));
    }
}
