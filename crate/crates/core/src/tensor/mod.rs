//! Dense tensors, the differentiable operation set, and gradient checking.

mod dense;
mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod rng;
mod scalar;

pub use dense::Tensor;
pub use gradcheck::{grad_check, grad_check_subset, GradCheckReport};
pub use graph::{Graph, Var};
pub use kernels::{adaptive_pool_taps, conv_out_extent, linear_interp_taps, Tap};
pub use rng::RngState;
pub use scalar::{DType, Scalar};
