//! Tape-based reverse-mode differentiation.
//!
//! Every operation on a [`Var`] appends one node to its [`Graph`]; inputs
//! always precede outputs, so replaying the tape backwards is a valid
//! topological order. A graph is single-threaded (`RefCell` inside).

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::error::{shape_err, Error, Result};

use super::dense::{split_axis, Tensor};
use super::kernels::{self, ConvGeom, Tap};
use super::scalar::Scalar;

#[derive(Debug)]
enum Op<S> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, S),
    AddScalar(usize),
    Relu(usize),
    Sqrt(usize),
    Ln(usize),
    Exp(usize),
    Clamp(usize, S, S),
    Linear {
        x: usize,
        w: usize,
        b: Option<usize>,
        outer: usize,
        n_in: usize,
        n_out: usize,
        inner: usize,
    },
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Conv {
        x: usize,
        w: usize,
        b: Option<usize>,
        geom: ConvGeom,
    },
    Softmax {
        x: usize,
        outer: usize,
        n: usize,
        inner: usize,
    },
    SumAll(usize),
    SumLast {
        x: usize,
        cols: usize,
    },
    ExpandLast {
        x: usize,
        cols: usize,
    },
    Reshape(usize),
    Permute {
        x: usize,
        in_dims: Vec<usize>,
        perm: Vec<usize>,
    },
    Concat {
        xs: Vec<usize>,
        extents: Vec<usize>,
        outer: usize,
        inner: usize,
    },
    Slice {
        x: usize,
        outer: usize,
        extent: usize,
        start: usize,
        len: usize,
        inner: usize,
    },
    Gather {
        x: usize,
        index: Vec<usize>,
        row: usize,
    },
    Resample {
        x: usize,
        taps: Rc<Vec<Tap>>,
        n_in: usize,
        n_out: usize,
    },
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Recording tape. Create leaves with [`Graph::param`] / [`Graph::constant`],
/// compose them through [`Var`] methods, then call [`Var::backward`].
#[derive(Debug, Default)]
pub struct Graph<S> {
    nodes: RefCell<Vec<Node<S>>>,
    grads: RefCell<Vec<Option<Vec<S>>>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, S> {
    graph: &'g Graph<S>,
    id: usize,
}

impl<S> std::fmt::Debug for Var<'_, S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.id)
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            grads: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, value: Tensor<S>) -> Var<'_, S> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf without gradient.
    pub fn constant(&self, value: Tensor<S>) -> Var<'_, S> {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&self, value: Tensor<S>, requires_grad: bool) -> Var<'_, S> {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn var(&self, id: usize) -> Var<'_, S> {
        Var { graph: self, id }
    }

    fn push(&self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var<'_, S> {
        let mut nodes = self.nodes.borrow_mut();
        // Nodes that cannot reach a gradient leaf are stored as constants so
        // their saved inputs are never touched by backward.
        let op = if requires_grad { op } else { Op::Leaf };
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn rg(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat<'g>(&'g self, xs: &[Var<'g, S>], axis: usize) -> Result<Var<'g, S>> {
        let first = xs
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let d0 = first.dims();
        if axis >= d0.len() {
            return Err(shape_err!("concat axis {axis} out of range for {:?}", d0));
        }
        let mut extents = Vec::with_capacity(xs.len());
        for x in xs {
            let d = x.dims();
            if d.len() != d0.len() || d.iter().zip(&d0).enumerate().any(|(i, (a, b))| i != axis && a != b) {
                return Err(shape_err!("concat of {:?} with {:?} on axis {axis}", d0, d));
            }
            extents.push(d[axis]);
        }
        let (outer, _, inner) = split_axis(&d0, axis);
        let total: usize = extents.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        {
            let nodes = self.nodes.borrow();
            for r in 0..outer {
                for (x, &e) in xs.iter().zip(&extents) {
                    let v = nodes[x.id].value.data();
                    out.extend_from_slice(&v[r * e * inner..(r + 1) * e * inner]);
                }
            }
        }
        let mut dims = d0.clone();
        dims[axis] = total;
        let rg = xs.iter().any(|x| self.rg(x.id));
        let op = Op::Concat {
            xs: xs.iter().map(|x| x.id).collect(),
            extents,
            outer,
            inner,
        };
        Ok(self.push(Tensor::new(&dims, out)?, op, rg))
    }

    /// Gradient of the most recent backward pass for `var`. Leaves that
    /// require a gradient but were not reached report zeros.
    pub fn grad(&self, var: Var<'_, S>) -> Option<Tensor<S>> {
        let nodes = self.nodes.borrow();
        let node = &nodes[var.id];
        if !node.requires_grad {
            return None;
        }
        let grads = self.grads.borrow();
        let dims = node.value.dims();
        Some(match grads.get(var.id).and_then(|g| g.as_ref()) {
            Some(g) => Tensor::new(dims, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(dims),
        })
    }

    fn backward_from(&self, seeds: &[(usize, Vec<S>)]) {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<S>>> = Vec::with_capacity(nodes.len());
        grads.resize_with(nodes.len(), || None);
        let mut top = 0;
        for (id, seed) in seeds {
            if nodes[*id].requires_grad {
                accumulate(&mut grads, &nodes, *id, seed);
                top = top.max(*id);
            }
        }
        for i in (0..=top).rev() {
            if matches!(nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            backprop_node(&nodes, &mut grads, i, &g);
        }
        *self.grads.borrow_mut() = grads;
    }
}

fn accumulate<S: Scalar>(grads: &mut [Option<Vec<S>>], nodes: &[Node<S>], id: usize, g: &[S]) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(acc) => {
            for (a, &b) in acc.iter_mut().zip(g) {
                *a = *a + b;
            }
        }
        slot @ None => *slot = Some(g.to_vec()),
    }
}

fn grad_buf<'a, S: Scalar>(grads: &'a mut [Option<Vec<S>>], nodes: &[Node<S>], id: usize) -> Option<&'a mut [S]> {
    if !nodes[id].requires_grad {
        return None;
    }
    let n = nodes[id].value.numel();
    Some(grads[id].get_or_insert_with(|| vec![S::zero(); n]).as_mut_slice())
}

/// Two distinct mutable gradient buffers; `None` for either that needs no gradient.
fn grad_pair<'a, S: Scalar>(
    grads: &'a mut [Option<Vec<S>>],
    nodes: &[Node<S>],
    a: usize,
    b: usize,
) -> (Option<&'a mut [S]>, Option<&'a mut [S]>) {
    assert_ne!(a, b);
    for id in [a, b] {
        if nodes[id].requires_grad && grads[id].is_none() {
            grads[id] = Some(vec![S::zero(); nodes[id].value.numel()]);
        }
    }
    let (lo, hi, swap) = if a < b { (a, b, false) } else { (b, a, true) };
    let (left, right) = grads.split_at_mut(hi);
    let ga = if nodes[lo].requires_grad {
        left[lo].as_deref_mut()
    } else {
        None
    };
    let gb = if nodes[hi].requires_grad {
        right[0].as_deref_mut()
    } else {
        None
    };
    if swap {
        (gb, ga)
    } else {
        (ga, gb)
    }
}

fn backprop_node<S: Scalar>(nodes: &[Node<S>], grads: &mut [Option<Vec<S>>], i: usize, g: &[S]) {
    let val = |id: usize| nodes[id].value.data();
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, g);
            accumulate(grads, nodes, *b, g);
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, *a, g);
            if let Some(db) = grad_buf(grads, nodes, *b) {
                for (d, &gv) in db.iter_mut().zip(g) {
                    *d = *d - gv;
                }
            }
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            if a == b {
                if let Some(da) = grad_buf(grads, nodes, *a) {
                    for k in 0..g.len() {
                        da[k] = da[k] + (va[k] + va[k]) * g[k];
                    }
                }
                return;
            }
            let (da, db) = grad_pair(grads, nodes, *a, *b);
            if let Some(da) = da {
                for k in 0..g.len() {
                    da[k] = da[k] + vb[k] * g[k];
                }
            }
            if let Some(db) = db {
                for k in 0..g.len() {
                    db[k] = db[k] + va[k] * g[k];
                }
            }
        }
        Op::Div(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            if a == b {
                return;
            }
            let (da, db) = grad_pair(grads, nodes, *a, *b);
            if let Some(da) = da {
                for k in 0..g.len() {
                    da[k] = da[k] + g[k] / vb[k];
                }
            }
            if let Some(db) = db {
                for k in 0..g.len() {
                    db[k] = db[k] - g[k] * va[k] / (vb[k] * vb[k]);
                }
            }
        }
        Op::Scale(a, c) => {
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for (d, &gv) in da.iter_mut().zip(g) {
                    *d = *d + *c * gv;
                }
            }
        }
        Op::AddScalar(a) | Op::Reshape(a) => accumulate(grads, nodes, *a, g),
        Op::Relu(a) => {
            let va = val(*a);
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for k in 0..g.len() {
                    if va[k] > S::zero() {
                        da[k] = da[k] + g[k];
                    }
                }
            }
        }
        Op::Sqrt(a) => {
            let y = nodes[i].value.data();
            let half = S::from_f64(0.5);
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for k in 0..g.len() {
                    da[k] = da[k] + half * g[k] / y[k];
                }
            }
        }
        Op::Ln(a) => {
            let va = val(*a);
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for k in 0..g.len() {
                    da[k] = da[k] + g[k] / va[k];
                }
            }
        }
        Op::Exp(a) => {
            let y = nodes[i].value.data();
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for k in 0..g.len() {
                    da[k] = da[k] + g[k] * y[k];
                }
            }
        }
        Op::Clamp(a, lo, hi) => {
            let va = val(*a);
            if let Some(da) = grad_buf(grads, nodes, *a) {
                for k in 0..g.len() {
                    if va[k] >= *lo && va[k] <= *hi {
                        da[k] = da[k] + g[k];
                    }
                }
            }
        }
        Op::Linear {
            x,
            w,
            b,
            outer,
            n_in,
            n_out,
            inner,
        } => {
            let (vx, vw) = (val(*x), val(*w));
            let mut db_buf = b.and_then(|b| nodes[b].requires_grad.then(|| vec![S::zero(); nodes[b].value.numel()]));
            let (dx, dw) = grad_pair(grads, nodes, *x, *w);
            kernels::linear_backward(vx, vw, g, *outer, *n_in, *n_out, *inner, dx, dw, db_buf.as_deref_mut());
            if let (Some(b), Some(db)) = (b, db_buf) {
                accumulate(grads, nodes, *b, &db);
            }
        }
        Op::MatMul { a, b, m, k, n } => {
            let (va, vb) = (val(*a), val(*b));
            if a == b {
                let mut da = vec![S::zero(); va.len()];
                let mut db = vec![S::zero(); vb.len()];
                kernels::matmul_backward(va, vb, g, *m, *k, *n, Some(&mut da), Some(&mut db));
                accumulate(grads, nodes, *a, &da);
                accumulate(grads, nodes, *a, &db);
                return;
            }
            let (da, db) = grad_pair(grads, nodes, *a, *b);
            kernels::matmul_backward(va, vb, g, *m, *k, *n, da, db);
        }
        Op::Conv { x, w, b, geom } => {
            let (vx, vw) = (val(*x), val(*w));
            let mut db_buf = b.and_then(|b| nodes[b].requires_grad.then(|| vec![S::zero(); nodes[b].value.numel()]));
            let (dx, dw) = grad_pair(grads, nodes, *x, *w);
            kernels::conv_backward(vx, vw, g, geom, dx, dw, db_buf.as_deref_mut());
            if let (Some(b), Some(db)) = (b, db_buf) {
                accumulate(grads, nodes, *b, &db);
            }
        }
        Op::Softmax { x, outer, n, inner } => {
            let y = nodes[i].value.data();
            if let Some(dx) = grad_buf(grads, nodes, *x) {
                kernels::softmax_backward(y, g, *outer, *n, *inner, dx);
            }
        }
        Op::SumAll(a) => {
            if let Some(da) = grad_buf(grads, nodes, *a) {
                let gv = g[0];
                da.iter_mut().for_each(|d| *d = *d + gv);
            }
        }
        Op::SumLast { x, cols } => {
            if let Some(dx) = grad_buf(grads, nodes, *x) {
                for (r, &gv) in g.iter().enumerate() {
                    dx[r * cols..(r + 1) * cols].iter_mut().for_each(|d| *d = *d + gv);
                }
            }
        }
        Op::ExpandLast { x, cols } => {
            if let Some(dx) = grad_buf(grads, nodes, *x) {
                for (r, d) in dx.iter_mut().enumerate() {
                    *d = *d + g[r * cols..(r + 1) * cols].iter().copied().sum::<S>();
                }
            }
        }
        Op::Permute { x, in_dims, perm } => {
            let out_dims: Vec<usize> = perm.iter().map(|&p| in_dims[p]).collect();
            let inv = kernels::inverse_perm(perm);
            let (_, back) = kernels::permute(g, &out_dims, &inv);
            accumulate(grads, nodes, *x, &back);
        }
        Op::Concat {
            xs,
            extents,
            outer,
            inner,
        } => {
            let total: usize = extents.iter().sum();
            let mut off = 0;
            for (&x, &e) in xs.iter().zip(extents) {
                if let Some(dx) = grad_buf(grads, nodes, x) {
                    for r in 0..*outer {
                        let src = &g[r * total * inner + off * inner..r * total * inner + (off + e) * inner];
                        let dst = &mut dx[r * e * inner..(r + 1) * e * inner];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    }
                }
                off += e;
            }
        }
        Op::Slice {
            x,
            outer,
            extent,
            start,
            len,
            inner,
        } => {
            if let Some(dx) = grad_buf(grads, nodes, *x) {
                for r in 0..*outer {
                    let dst = &mut dx[r * extent * inner + start * inner..r * extent * inner + (start + len) * inner];
                    let src = &g[r * len * inner..(r + 1) * len * inner];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = *d + s;
                    }
                }
            }
        }
        Op::Gather { x, index, row } => {
            if let Some(dx) = grad_buf(grads, nodes, *x) {
                for (o, &src) in index.iter().enumerate() {
                    let dst = &mut dx[src * row..(src + 1) * row];
                    for (d, &s) in dst.iter_mut().zip(&g[o * row..(o + 1) * row]) {
                        *d = *d + s;
                    }
                }
            }
        }
        Op::Resample { x, taps, n_in, n_out } => {
            if let Some(dx) = grad_buf(grads, nodes, *x) {
                let rows = g.len() / n_out;
                for r in 0..rows {
                    for t in taps.iter() {
                        let k = r * n_in + t.input;
                        dx[k] = dx[k] + S::from_f64(t.weight) * g[r * n_out + t.out];
                    }
                }
            }
        }
    }
}

impl<'g, S: Scalar> Var<'g, S> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn graph(&self) -> &'g Graph<S> {
        self.graph
    }

    pub fn value(&self) -> Ref<'g, Tensor<S>> {
        Ref::map(self.graph.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn tensor(&self) -> Tensor<S> {
        self.value().clone()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.value().dims().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.value().numel()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.rg(self.id)
    }

    pub fn grad(&self) -> Option<Tensor<S>> {
        self.graph.grad(*self)
    }

    /// Reverse pass from this scalar. Populates gradients for every leaf.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got dims {:?}",
                self.dims()
            )));
        }
        self.graph.backward_from(&[(self.id, vec![S::one()])]);
        Ok(())
    }

    /// Vector-Jacobian product: reverse pass seeded with `seed` (same shape as self).
    pub fn backward_with(&self, seed: &Tensor<S>) -> Result<()> {
        if seed.dims() != self.dims().as_slice() {
            return Err(shape_err!("seed {:?} vs value {:?}", seed.dims(), self.dims()));
        }
        self.graph.backward_from(&[(self.id, seed.data().to_vec())]);
        Ok(())
    }

    fn unary(&self, op: Op<S>, f: impl Fn(S) -> S) -> Var<'g, S> {
        let out = {
            let v = self.value();
            Tensor::new(v.dims(), v.data().iter().map(|&x| f(x)).collect()).unwrap()
        };
        self.graph.push(out, op, self.requires_grad())
    }

    fn binary(&self, other: &Var<'g, S>, op: Op<S>, f: impl Fn(S, S) -> S) -> Result<Var<'g, S>> {
        let out = {
            let (a, b) = (self.value(), other.value());
            if a.dims() != b.dims() {
                return Err(shape_err!("elementwise op on {:?} and {:?}", a.dims(), b.dims()));
            }
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(a.dims(), data)?
        };
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.graph.push(out, op, rg))
    }

    pub fn add(&self, o: &Var<'g, S>) -> Result<Var<'g, S>> {
        self.binary(o, Op::Add(self.id, o.id), |a, b| a + b)
    }

    pub fn sub(&self, o: &Var<'g, S>) -> Result<Var<'g, S>> {
        self.binary(o, Op::Sub(self.id, o.id), |a, b| a - b)
    }

    pub fn mul(&self, o: &Var<'g, S>) -> Result<Var<'g, S>> {
        self.binary(o, Op::Mul(self.id, o.id), |a, b| a * b)
    }

    pub fn div(&self, o: &Var<'g, S>) -> Result<Var<'g, S>> {
        if o.id == self.id {
            return Err(Error::Contract("x / x is not supported".into()));
        }
        self.binary(o, Op::Div(self.id, o.id), |a, b| a / b)
    }

    pub fn scale(&self, c: f64) -> Var<'g, S> {
        let c = S::from_f64(c);
        self.unary(Op::Scale(self.id, c), |x| x * c)
    }

    pub fn neg(&self) -> Var<'g, S> {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Var<'g, S> {
        let c = S::from_f64(c);
        self.unary(Op::AddScalar(self.id), |x| x + c)
    }

    pub fn relu(&self) -> Var<'g, S> {
        self.unary(Op::Relu(self.id), |x| if x > S::zero() { x } else { S::zero() })
    }

    pub fn sqrt(&self) -> Var<'g, S> {
        self.unary(Op::Sqrt(self.id), |x| x.sqrt())
    }

    pub fn ln(&self) -> Var<'g, S> {
        self.unary(Op::Ln(self.id), |x| x.ln())
    }

    pub fn exp(&self) -> Var<'g, S> {
        self.unary(Op::Exp(self.id), |x| x.exp())
    }

    pub fn square(&self) -> Var<'g, S> {
        self.mul(self).expect("same dims")
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Var<'g, S> {
        let (lo, hi) = (S::from_f64(lo), S::from_f64(hi));
        self.unary(Op::Clamp(self.id, lo, hi), |x| x.max(lo).min(hi))
    }

    /// Axis-wise linear map: `weight` is (out, in), `bias` is (out).
    pub fn linear(&self, weight: &Var<'g, S>, bias: Option<&Var<'g, S>>, axis: usize) -> Result<Var<'g, S>> {
        let dims = self.dims();
        let wd = weight.dims();
        if axis >= dims.len() {
            return Err(shape_err!("linear axis {axis} out of range for {:?}", dims));
        }
        if wd.len() != 2 || wd[1] != dims[axis] {
            return Err(shape_err!(
                "linear weight {:?} cannot map axis {axis} of {:?}",
                wd,
                dims
            ));
        }
        if let Some(b) = bias {
            if b.dims() != [wd[0]] {
                return Err(shape_err!("bias {:?} for weight {:?}", b.dims(), wd));
            }
        }
        let (outer, n_in, inner) = split_axis(&dims, axis);
        let n_out = wd[0];
        let out = {
            let bv = bias.map(|b| b.value());
            kernels::linear_forward(
                self.value().data(),
                weight.value().data(),
                bv.as_ref().map(|b| b.data()),
                outer,
                n_in,
                n_out,
                inner,
            )
        };
        let mut od = dims.clone();
        od[axis] = n_out;
        let rg = self.requires_grad() || weight.requires_grad() || bias.is_some_and(|b| b.requires_grad());
        let op = Op::Linear {
            x: self.id,
            w: weight.id,
            b: bias.map(|b| b.id),
            outer,
            n_in,
            n_out,
            inner,
        };
        Ok(self.graph.push(Tensor::new(&od, out)?, op, rg))
    }

    /// 2-D matrix product.
    pub fn matmul(&self, other: &Var<'g, S>) -> Result<Var<'g, S>> {
        let (a, b) = (self.dims(), other.dims());
        if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
            return Err(shape_err!("matmul of {:?} and {:?}", a, b));
        }
        let (m, k, n) = (a[0], a[1], b[1]);
        let out = kernels::matmul_forward(self.value().data(), other.value().data(), m, k, n);
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.graph.push(
            Tensor::new(&[m, n], out)?,
            Op::MatMul {
                a: self.id,
                b: other.id,
                m,
                k,
                n,
            },
            rg,
        ))
    }

    pub fn transpose(&self) -> Result<Var<'g, S>> {
        if self.dims().len() != 2 {
            return Err(shape_err!("transpose needs rank 2, got {:?}", self.dims()));
        }
        self.permute(&[1, 0])
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_general(
        &self,
        weight: &Var<'g, S>,
        bias: Option<&Var<'g, S>>,
        stride: (usize, usize),
        pad: (usize, usize),
        groups: usize,
    ) -> Result<Var<'g, S>> {
        let xd = self.dims();
        let wd = weight.dims();
        if xd.len() != 4 || wd.len() != 4 {
            return Err(shape_err!("conv input {:?} / weight {:?}", xd, wd));
        }
        let (c_out, c_in) = (wd[0], xd[1]);
        if groups == 0 || c_in % groups != 0 || c_out % groups != 0 || wd[1] * groups != c_in {
            return Err(shape_err!(
                "conv weight {:?} incompatible with {c_in} input channels in {groups} groups",
                wd
            ));
        }
        if let Some(b) = bias {
            if b.dims() != [c_out] {
                return Err(shape_err!("conv bias {:?} for {c_out} channels", b.dims()));
            }
        }
        let ho = kernels::conv_out_extent(xd[2], wd[2], stride.0, pad.0)?;
        let wo = kernels::conv_out_extent(xd[3], wd[3], stride.1, pad.1)?;
        let geom = ConvGeom {
            batch: xd[0],
            c_in,
            h: xd[2],
            w: xd[3],
            c_out,
            kh: wd[2],
            kw: wd[3],
            sh: stride.0,
            sw: stride.1,
            ph: pad.0,
            pw: pad.1,
            groups,
            ho,
            wo,
        };
        let out = {
            let bv = bias.map(|b| b.value());
            kernels::conv_forward(
                self.value().data(),
                weight.value().data(),
                bv.as_ref().map(|b| b.data()),
                &geom,
            )
        };
        let rg = self.requires_grad() || weight.requires_grad() || bias.is_some_and(|b| b.requires_grad());
        let op = Op::Conv {
            x: self.id,
            w: weight.id,
            b: bias.map(|b| b.id),
            geom,
        };
        Ok(self.graph.push(Tensor::new(&[xd[0], c_out, ho, wo], out)?, op, rg))
    }

    /// Cross-correlation of (N, C_in, H, W) with (C_out, C_in, k, k).
    pub fn conv2d(
        &self,
        weight: &Var<'g, S>,
        bias: Option<&Var<'g, S>>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<'g, S>> {
        self.conv_general(weight, bias, (stride, stride), (padding, padding), 1)
    }

    /// One k×k filter per channel: (N, C, H, W) with weight (C, 1, k, k).
    pub fn depthwise_conv2d(
        &self,
        weight: &Var<'g, S>,
        bias: Option<&Var<'g, S>>,
        padding: usize,
    ) -> Result<Var<'g, S>> {
        let c = self.dims().get(1).copied().unwrap_or(0);
        self.conv_general(weight, bias, (1, 1), (padding, padding), c.max(1))
    }

    fn as_1d_input(&self) -> Result<Var<'g, S>> {
        let d = self.dims();
        if d.len() != 3 {
            return Err(shape_err!("1-D convolution needs (N, C, L), got {:?}", d));
        }
        self.reshape(&[d[0], d[1], 1, d[2]])
    }

    fn squeeze_1d(v: Var<'g, S>) -> Result<Var<'g, S>> {
        let d = v.dims();
        v.reshape(&[d[0], d[1], d[3]])
    }

    /// 1-D cross-correlation of (N, C_in, L) with (C_out, C_in, k).
    pub fn conv1d(
        &self,
        weight: &Var<'g, S>,
        bias: Option<&Var<'g, S>>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<'g, S>> {
        let wd = weight.dims();
        if wd.len() != 3 {
            return Err(shape_err!("conv1d weight {:?}", wd));
        }
        let w4 = weight.reshape(&[wd[0], wd[1], 1, wd[2]])?;
        let y = self
            .as_1d_input()?
            .conv_general(&w4, bias, (1, stride), (0, padding), 1)?;
        Self::squeeze_1d(y)
    }

    /// Depthwise 1-D convolution: (N, C, L) with weight (C, 1, k).
    pub fn depthwise_conv1d(
        &self,
        weight: &Var<'g, S>,
        bias: Option<&Var<'g, S>>,
        padding: usize,
    ) -> Result<Var<'g, S>> {
        let wd = weight.dims();
        if wd.len() != 3 {
            return Err(shape_err!("depthwise conv1d weight {:?}", wd));
        }
        let c = self.dims().get(1).copied().unwrap_or(0);
        let w4 = weight.reshape(&[wd[0], wd[1], 1, wd[2]])?;
        let y = self
            .as_1d_input()?
            .conv_general(&w4, bias, (1, 1), (0, padding), c.max(1))?;
        Self::squeeze_1d(y)
    }

    pub fn softmax(&self, axis: usize) -> Result<Var<'g, S>> {
        let dims = self.dims();
        if axis >= dims.len() {
            return Err(shape_err!("softmax axis {axis} out of range for {:?}", dims));
        }
        let (outer, n, inner) = split_axis(&dims, axis);
        let out = kernels::softmax_forward(self.value().data(), outer, n, inner);
        Ok(self.graph.push(
            Tensor::new(&dims, out)?,
            Op::Softmax {
                x: self.id,
                outer,
                n,
                inner,
            },
            self.requires_grad(),
        ))
    }

    pub fn sum(&self) -> Var<'g, S> {
        let s: S = self.value().data().iter().copied().sum();
        self.graph
            .push(Tensor::scalar(s), Op::SumAll(self.id), self.requires_grad())
    }

    pub fn mean(&self) -> Var<'g, S> {
        let n = self.numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sums the last axis away. A rank-1 input yields shape (1).
    pub fn sum_last(&self) -> Var<'g, S> {
        let dims = self.dims();
        let cols = *dims.last().unwrap();
        let out: Vec<S> = self
            .value()
            .data()
            .chunks(cols)
            .map(|c| c.iter().copied().sum())
            .collect();
        let od = if dims.len() == 1 {
            vec![1]
        } else {
            dims[..dims.len() - 1].to_vec()
        };
        self.graph.push(
            Tensor::new(&od, out).unwrap(),
            Op::SumLast { x: self.id, cols },
            self.requires_grad(),
        )
    }

    pub fn mean_last(&self) -> Var<'g, S> {
        let cols = *self.dims().last().unwrap();
        self.sum_last().scale(1.0 / cols as f64)
    }

    /// Maximum over the last axis; the gradient flows to the first maximiser.
    pub fn max_last(&self) -> Result<Var<'g, S>> {
        let dims = self.dims();
        let cols = *dims.last().unwrap();
        let index: Vec<usize> = self
            .value()
            .data()
            .chunks(cols)
            .enumerate()
            .map(|(r, c)| {
                let arg = c
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, &v)| if v > c[best] { i } else { best });
                r * cols + arg
            })
            .collect();
        let od = if dims.len() == 1 {
            vec![1]
        } else {
            dims[..dims.len() - 1].to_vec()
        };
        self.reshape(&[self.numel(), 1])?.gather(&index)?.reshape(&od)
    }

    /// Population variance over the last axis.
    pub fn var_last(&self) -> Result<Var<'g, S>> {
        let cols = *self.dims().last().unwrap();
        let mu = self.mean_last().expand_last(cols)?.reshape(&self.dims())?;
        Ok(self.sub(&mu)?.square().mean_last())
    }

    /// Appends a new last axis of extent `cols`, repeating each element.
    pub fn expand_last(&self, cols: usize) -> Result<Var<'g, S>> {
        if cols == 0 {
            return Err(shape_err!("expand to zero extent"));
        }
        let mut od = self.dims();
        od.push(cols);
        let out: Vec<S> = self
            .value()
            .data()
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, cols))
            .collect();
        Ok(self.graph.push(
            Tensor::new(&od, out)?,
            Op::ExpandLast { x: self.id, cols },
            self.requires_grad(),
        ))
    }

    pub fn reshape(&self, dims: &[usize]) -> Result<Var<'g, S>> {
        let out = self.tensor().reshape(dims)?;
        Ok(self.graph.push(out, Op::Reshape(self.id), self.requires_grad()))
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Var<'g, S>> {
        let dims = self.dims();
        let mut seen = vec![false; dims.len()];
        if perm.len() != dims.len()
            || perm
                .iter()
                .any(|&p| p >= dims.len() || std::mem::replace(&mut seen[p], true))
        {
            return Err(shape_err!("invalid permutation {:?} for {:?}", perm, dims));
        }
        let (od, out) = kernels::permute(self.value().data(), &dims, perm);
        Ok(self.graph.push(
            Tensor::new(&od, out)?,
            Op::Permute {
                x: self.id,
                in_dims: dims,
                perm: perm.to_vec(),
            },
            self.requires_grad(),
        ))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Var<'g, S>> {
        let dims = self.dims();
        if axis >= dims.len() || len == 0 || start + len > dims[axis] {
            return Err(shape_err!(
                "slice {start}..{} of axis {axis} in {:?}",
                start + len,
                dims
            ));
        }
        let (outer, extent, inner) = split_axis(&dims, axis);
        let out = {
            let v = self.value();
            let d = v.data();
            let mut out = Vec::with_capacity(outer * len * inner);
            for r in 0..outer {
                let base = r * extent * inner;
                out.extend_from_slice(&d[base + start * inner..base + (start + len) * inner]);
            }
            out
        };
        let mut od = dims;
        od[axis] = len;
        Ok(self.graph.push(
            Tensor::new(&od, out)?,
            Op::Slice {
                x: self.id,
                outer,
                extent,
                start,
                len,
                inner,
            },
            self.requires_grad(),
        ))
    }

    /// Selects entries of the leading axis: `out[i] = self[index[i]]`.
    pub fn gather(&self, index: &[usize]) -> Result<Var<'g, S>> {
        let dims = self.dims();
        if index.is_empty() || index.iter().any(|&i| i >= dims[0]) {
            return Err(shape_err!("gather index out of range for leading extent {}", dims[0]));
        }
        let row = self.numel() / dims[0];
        let out = {
            let v = self.value();
            let d = v.data();
            let mut out = Vec::with_capacity(index.len() * row);
            for &i in index {
                out.extend_from_slice(&d[i * row..(i + 1) * row]);
            }
            out
        };
        let mut od = dims;
        od[0] = index.len();
        Ok(self.graph.push(
            Tensor::new(&od, out)?,
            Op::Gather {
                x: self.id,
                index: index.to_vec(),
                row,
            },
            self.requires_grad(),
        ))
    }

    /// Applies a fixed linear resampling to the last axis.
    pub fn resample_last(&self, taps: Rc<Vec<Tap>>, n_out: usize) -> Result<Var<'g, S>> {
        let dims = self.dims();
        let n_in = *dims.last().unwrap();
        if taps.iter().any(|t| t.input >= n_in || t.out >= n_out) {
            return Err(shape_err!("resampling taps do not fit {n_in} -> {n_out}"));
        }
        let out = {
            let v = self.value();
            let rows = v.numel() / n_in;
            let mut out = vec![S::zero(); rows * n_out];
            for (r, x) in v.data().chunks(n_in).enumerate() {
                let y = &mut out[r * n_out..(r + 1) * n_out];
                for t in taps.iter() {
                    y[t.out] = y[t.out] + S::from_f64(t.weight) * x[t.input];
                }
            }
            out
        };
        let mut od = dims;
        *od.last_mut().unwrap() = n_out;
        Ok(self.graph.push(
            Tensor::new(&od, out)?,
            Op::Resample {
                x: self.id,
                taps,
                n_in,
                n_out,
            },
            self.requires_grad(),
        ))
    }

    /// Adaptive average pooling of the last axis to `n_out` bins.
    pub fn adaptive_avg_pool_last(&self, n_out: usize) -> Result<Var<'g, S>> {
        if n_out == 0 {
            return Err(shape_err!("adaptive pool to zero extent"));
        }
        let n_in = *self.dims().last().unwrap();
        self.resample_last(Rc::new(kernels::adaptive_pool_taps(n_in, n_out)), n_out)
    }

    /// Linear interpolation of the last axis to `n_out` samples.
    pub fn interp_last(&self, n_out: usize) -> Result<Var<'g, S>> {
        if n_out == 0 {
            return Err(shape_err!("interpolation to zero extent"));
        }
        let n_in = *self.dims().last().unwrap();
        self.resample_last(Rc::new(kernels::linear_interp_taps(n_in, n_out)), n_out)
    }
}
