//! Parameterised layers. Each holds [`ParamId`]s into a store and is applied
//! against a [`Bound`] view of that store.

use crate::error::Result;
use crate::tensor::{Scalar, Var};

use super::params::{Bound, ParamBuilder, ParamId};

/// Axis-wise affine map with weight (out, in) and bias (out).
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<S: Scalar>(b: &mut ParamBuilder<'_, S>, name: &str, n_in: usize, n_out: usize, bias: bool) -> Self {
        Self::with_gain(b, name, n_in, n_out, bias, 1.0)
    }

    /// Weight bound scaled by `gain`; used for the last layer of residual branches.
    pub fn with_gain<S: Scalar>(
        b: &mut ParamBuilder<'_, S>,
        name: &str,
        n_in: usize,
        n_out: usize,
        bias: bool,
        gain: f64,
    ) -> Self {
        let weight = b.weight_with_gain(&format!("{name}.weight"), &[n_out, n_in], n_in, gain);
        let bias = bias.then(|| b.zeros(&format!("{name}.bias"), &[n_out]));
        Self { weight, bias }
    }

    pub fn forward<'g, S: Scalar>(&self, p: &Bound<'g, S>, x: &Var<'g, S>, axis: usize) -> Result<Var<'g, S>> {
        x.linear(p.get(self.weight), self.bias.map(|b| p.get(b)), axis)
    }
}

/// Dense 2-D convolution over (N, C, H, W).
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Scalar>(
        b: &mut ParamBuilder<'_, S>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self::with_gain(b, name, c_in, c_out, k, stride, padding, 1.0)
    }

    /// Weight bound scaled by `gain`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_gain<S: Scalar>(
        b: &mut ParamBuilder<'_, S>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
        gain: f64,
    ) -> Self {
        Self {
            weight: b.weight_with_gain(&format!("{name}.weight"), &[c_out, c_in, k, k], c_in * k * k, gain),
            bias: b.zeros(&format!("{name}.bias"), &[c_out]),
            stride,
            padding,
        }
    }

    pub fn forward<'g, S: Scalar>(&self, p: &Bound<'g, S>, x: &Var<'g, S>) -> Result<Var<'g, S>> {
        x.conv2d(p.get(self.weight), Some(p.get(self.bias)), self.stride, self.padding)
    }
}

/// Depthwise k×k convolution, stride 1, "same" padding.
#[derive(Clone, Debug)]
pub struct DepthwiseConv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub padding: usize,
}

impl DepthwiseConv2d {
    pub fn new<S: Scalar>(b: &mut ParamBuilder<'_, S>, name: &str, channels: usize, k: usize) -> Self {
        Self {
            weight: b.weight(&format!("{name}.weight"), &[channels, 1, k, k], k * k),
            bias: b.zeros(&format!("{name}.bias"), &[channels]),
            padding: k / 2,
        }
    }

    pub fn forward<'g, S: Scalar>(&self, p: &Bound<'g, S>, x: &Var<'g, S>) -> Result<Var<'g, S>> {
        x.depthwise_conv2d(p.get(self.weight), Some(p.get(self.bias)), self.padding)
    }
}

/// Dense 1-D convolution over (N, C, L).
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Scalar>(
        b: &mut ParamBuilder<'_, S>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self::with_gain(b, name, c_in, c_out, k, stride, padding, 1.0)
    }

    /// Weight bound scaled by `gain`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_gain<S: Scalar>(
        b: &mut ParamBuilder<'_, S>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
        gain: f64,
    ) -> Self {
        Self {
            weight: b.weight_with_gain(&format!("{name}.weight"), &[c_out, c_in, k], c_in * k, gain),
            bias: b.zeros(&format!("{name}.bias"), &[c_out]),
            stride,
            padding,
        }
    }

    pub fn forward<'g, S: Scalar>(&self, p: &Bound<'g, S>, x: &Var<'g, S>) -> Result<Var<'g, S>> {
        x.conv1d(p.get(self.weight), Some(p.get(self.bias)), self.stride, self.padding)
    }
}

/// Depthwise 1-D convolution, stride 1, "same" padding.
#[derive(Clone, Debug)]
pub struct DepthwiseConv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub padding: usize,
}

impl DepthwiseConv1d {
    pub fn new<S: Scalar>(b: &mut ParamBuilder<'_, S>, name: &str, channels: usize, k: usize) -> Self {
        Self {
            weight: b.weight(&format!("{name}.weight"), &[channels, 1, k], k),
            bias: b.zeros(&format!("{name}.bias"), &[channels]),
            padding: k / 2,
        }
    }

    pub fn forward<'g, S: Scalar>(&self, p: &Bound<'g, S>, x: &Var<'g, S>) -> Result<Var<'g, S>> {
        x.depthwise_conv1d(p.get(self.weight), Some(p.get(self.bias)), self.padding)
    }
}
