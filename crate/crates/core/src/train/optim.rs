//! AdamW with decoupled weight decay and the linear per-epoch learning-rate decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moment estimates for every parameter of a store.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub cfg: AdamWConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new<S: Scalar>(params: &ParamStore<S>, cfg: AdamWConfig) -> Self {
        let zeros = || params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            cfg,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update:
    /// `θ ← θ − lr·wd·θ − lr·m̂ / (sqrt(v̂) + ε)` with bias-corrected moments.
    /// A non-finite gradient aborts before any parameter is touched.
    pub fn step<S: Scalar>(&mut self, params: &mut ParamStore<S>, grads: &[Tensor<S>], lr: f64) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Contract(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.dims() != params.tensors()[i].dims() {
                return Err(Error::Contract(format!(
                    "gradient shape mismatch for {}",
                    params.name_at(i)
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient of {} is not finite",
                    params.name_at(i)
                )));
            }
        }
        self.step += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (i, theta) in params.tensors_mut().iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, (x, g)) in theta.data_mut().iter_mut().zip(grads[i].data()).enumerate() {
                let g = g.as_f64();
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let (mh, vh) = (m[k] / c1, v[k] / c2);
                let t = x.as_f64();
                *x = S::from_f64(t - lr * weight_decay * t - lr * mh / (vh.sqrt() + eps));
            }
        }
        Ok(())
    }
}

/// `lr0 + (lr1 − lr0)·e/(epochs − 1)`, constant within an epoch. Written as
/// a convex combination so both end points come out exactly.
pub fn lr_schedule(epoch: usize, epochs: usize, lr0: f64, lr1: f64) -> Result<f64> {
    if epoch >= epochs {
        return Err(Error::Contract(format!("epoch {epoch} outside 0..{epochs}")));
    }
    if epochs == 1 {
        return Ok(lr0);
    }
    let s = epoch as f64 / (epochs - 1) as f64;
    Ok(lr0 * (1.0 - s) + lr1 * s)
}
