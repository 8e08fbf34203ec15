//! Central finite-difference gradient checking in 64-bit.

use crate::error::Result;

use super::dense::Tensor;
use super::graph::{Graph, Var};

/// Outcome of a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Max over checked elements of `|a - n| / max(|a|, |n|, 1e-8)`.
    pub max_rel_err: f64,
    /// (input index, element index) of the worst element.
    pub worst: Option<(usize, usize)>,
    /// (analytic, numeric) derivative at the worst element.
    pub worst_values: Option<(f64, f64)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Compares the tape gradient of a scalar function against central
/// differences with step `eps`, over every element of every input.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    grad_check_subset(f, inputs, eps, None)
}

/// Like [`grad_check`] but probes at most `max_per_input` evenly spaced
/// elements of each input.
pub fn grad_check_subset<F>(
    f: F,
    inputs: &[Tensor<f64>],
    eps: f64,
    max_per_input: Option<usize>,
) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    let analytic: Vec<Tensor<f64>> = {
        let g = Graph::new();
        let vars: Vec<_> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&g, &vars)?;
        out.backward()?;
        vars.iter().map(|v| v.grad().expect("param grad")).collect()
    };
    let eval = |probe: &[Tensor<f64>]| -> Result<f64> {
        let g = Graph::new();
        let vars: Vec<_> = probe.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&g, &vars)?.value().item();
        Ok(out)
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        worst_values: None,
        checked: 0,
    };
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    for (ii, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let step = match max_per_input {
            Some(m) if m > 0 && m < n => n.div_ceil(m),
            _ => 1,
        };
        for k in (0..n).step_by(step) {
            let orig = input.data()[k];
            probe[ii].data_mut()[k] = orig + eps;
            let up = eval(&probe)?;
            probe[ii].data_mut()[k] = orig - eps;
            let down = eval(&probe)?;
            probe[ii].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[ii].data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(rel);
                if rel >= report.max_rel_err {
                    report.worst = Some((ii, k));
                    report.worst_values = Some((a, numeric));
                }
            }
        }
    }
    Ok(report)
}
