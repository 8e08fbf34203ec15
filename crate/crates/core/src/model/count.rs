use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Result;

use super::config::ModelConfig;
use super::detector::Detector;

/// Trainable scalar count with a per-component breakdown.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub total: usize,
    pub breakdown: Vec<(String, usize)>,
}

/// Groups a parameter name into its reporting component: blocks of a stage
/// are pooled per module kind, everything else by its first two segments.
pub fn component_of(name: &str) -> String {
    let parts: Vec<&str> = name.split('.').collect();
    if parts[0].starts_with("stage") && parts.len() > 2 {
        return match parts[1] {
            "down_v" | "down_a" => format!("{}.downsample", parts[0]),
            _ if parts[2] == "saavm" && parts.get(3) == Some(&"pos_embed") => {
                format!("{}.saavm.pos_embed", parts[0])
            }
            _ => format!("{}.{}", parts[0], parts[2]),
        };
    }
    parts[..2.min(parts.len())].join(".")
}

pub fn count_params(cfg: &ModelConfig) -> Result<ParamCount> {
    let model = Detector::<f32>::zeroed(cfg.clone())?;
    let mut by_component: BTreeMap<String, usize> = BTreeMap::new();
    let mut order = Vec::new();
    for (name, t) in model.params().iter() {
        let c = component_of(name);
        if !by_component.contains_key(&c) {
            order.push(c.clone());
        }
        *by_component.entry(c).or_default() += t.numel();
    }
    let breakdown: Vec<(String, usize)> = order
        .into_iter()
        .map(|c| {
            let n = by_component[&c];
            (c, n)
        })
        .collect();
    Ok(ParamCount {
        total: model.params().scalar_count(),
        breakdown,
    })
}
