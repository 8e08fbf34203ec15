use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{Graph, RngState, Scalar, Tensor, Var};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Ordered, named collection of trainable tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<S> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor<S>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter name {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<S>> {
        self.id(name).map(|i| self.get(i))
    }

    pub fn name_at(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.tensors
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set(&mut self, name: &str, t: Tensor<S>) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::Format(format!("unknown parameter {name}")))?;
        if self.tensors[id.0].dims() != t.dims() {
            return Err(Error::Format(format!(
                "parameter {name}: expected {:?}, found {:?}",
                self.tensors[id.0].dims(),
                t.dims()
            )));
        }
        self.tensors[id.0] = t;
        Ok(())
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Places every parameter on `graph` as a gradient leaf.
    pub fn bind<'g>(&self, graph: &'g Graph<S>) -> Bound<'g, S> {
        Bound {
            vars: self.tensors.iter().map(|t| graph.param(t.clone())).collect(),
        }
    }

    /// Places every parameter on `graph` without gradient tracking.
    pub fn bind_frozen<'g>(&self, graph: &'g Graph<S>) -> Bound<'g, S> {
        Bound {
            vars: self.tensors.iter().map(|t| graph.constant(t.clone())).collect(),
        }
    }
}

/// Parameters placed on a graph, addressable by [`ParamId`].
pub struct Bound<'g, S> {
    vars: Vec<Var<'g, S>>,
}

impl<'g, S: Scalar> Bound<'g, S> {
    /// Wraps caller-created vars, one per parameter in store order.
    pub fn from_vars(vars: Vec<Var<'g, S>>) -> Self {
        Self { vars }
    }

    pub fn vars(&self) -> &[Var<'g, S>] {
        &self.vars
    }

    pub fn get(&self, id: ParamId) -> &Var<'g, S> {
        &self.vars[id.0]
    }

    /// Gradients of every bound parameter after a backward pass, in store order.
    pub fn grads(&self) -> Vec<Tensor<S>> {
        self.vars
            .iter()
            .map(|v| v.grad().unwrap_or_else(|| Tensor::zeros(&v.dims())))
            .collect()
    }
}

/// Creates parameters with fan-in-scaled uniform weights and zero biases.
pub struct ParamBuilder<'a, S> {
    store: &'a mut ParamStore<S>,
    rng: Option<&'a mut RngState>,
}

impl<'a, S: Scalar> ParamBuilder<'a, S> {
    /// `rng = None` creates all-zero tensors (shape bookkeeping only).
    pub fn new(store: &'a mut ParamStore<S>, rng: Option<&'a mut RngState>) -> Self {
        Self { store, rng }
    }

    /// Weight tensor drawn from U(-sqrt(3/fan_in), sqrt(3/fan_in)), unit gain for linear maps.
    pub fn weight(&mut self, name: &str, dims: &[usize], fan_in: usize) -> ParamId {
        self.weight_with_gain(name, dims, fan_in, 1.0)
    }

    /// As [`weight`](Self::weight) with the bound multiplied by `gain`.
    pub fn weight_with_gain(&mut self, name: &str, dims: &[usize], fan_in: usize, gain: f64) -> ParamId {
        let bound = gain * (3.0 / fan_in as f64).sqrt();
        let t = match self.rng.as_deref_mut() {
            Some(rng) => Tensor::from_fn(dims, |_| S::from_f64(rng.uniform(-bound, bound))),
            None => Tensor::zeros(dims),
        };
        self.store.add(name, t)
    }

    pub fn zeros(&mut self, name: &str, dims: &[usize]) -> ParamId {
        self.store.add(name, Tensor::zeros(dims))
    }
}
