//! ACC and AUC per prediction target, and the report file.
//!
//! Scores are real-class probabilities ŷ; AUC treats *fake* as the positive
//! class with score 1 − ŷ. ACC thresholds ŷ at 0.5.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rank-statistic AUC with midranks for ties. `positive[i]` marks the
/// positive class. `None` when either class is absent.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len(), "scores and labels differ in length");
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Fraction of `prob_real` on the correct side of 0.5. A probability of
/// exactly 0.5 counts as a vote for the majority class of `real`.
pub fn accuracy(prob_real: &[f64], real: &[bool]) -> f64 {
    assert_eq!(prob_real.len(), real.len(), "scores and labels differ in length");
    if real.is_empty() {
        return 0.0;
    }
    let n_real = real.iter().filter(|&&r| r).count();
    let majority_real = 2 * n_real >= real.len();
    let hits = prob_real
        .iter()
        .zip(real)
        .filter(|(&p, &r)| {
            let said_real = if p == 0.5 { majority_real } else { p > 0.5 };
            said_real == r
        })
        .count();
    hits as f64 / real.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub acc: f64,
    pub auc: Option<f64>,
}

impl TargetMetrics {
    pub fn compute(prob_real: &[f64], real: &[bool]) -> Self {
        let fake_scores: Vec<f64> = prob_real.iter().map(|p| 1.0 - p).collect();
        let fake: Vec<bool> = real.iter().map(|r| !r).collect();
        Self {
            acc: accuracy(prob_real, real),
            auc: auc(&fake_scores, &fake),
        }
    }
}

/// Loss terms averaged over one epoch, plus validation AUC per head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub steps: usize,
    pub loss: f64,
    pub cls: f64,
    pub adv: f64,
    pub con: f64,
    pub val_visual_auc: Option<f64>,
    pub val_audio_auc: Option<f64>,
    pub val_whole_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub samples: usize,
    pub visual: TargetMetrics,
    pub audio: TargetMetrics,
    pub whole: TargetMetrics,
    pub params: usize,
    pub loss_curve: Vec<EpochLog>,
}

impl MetricReport {
    /// `key = value` lines followed by the same content as one JSON object.
    pub fn render(&self) -> Result<String> {
        let mut s = String::new();
        let fmt = |x: Option<f64>| x.map_or("absent".to_string(), |v| format!("{v:.6}"));
        writeln!(s, "samples = {}", self.samples).unwrap();
        writeln!(s, "params = {}", self.params).unwrap();
        for (name, m) in [("visual", &self.visual), ("audio", &self.audio), ("whole", &self.whole)] {
            writeln!(s, "{name}.acc = {:.6}", m.acc).unwrap();
            writeln!(s, "{name}.auc = {}", fmt(m.auc)).unwrap();
        }
        for e in &self.loss_curve {
            writeln!(
                s,
                "epoch.{} = loss {:.6} cls {:.6} adv {:.6} con {:.6} lr {:.6e} val_auc v/a/w {}/{}/{}",
                e.epoch,
                e.loss,
                e.cls,
                e.adv,
                e.con,
                e.lr,
                fmt(e.val_visual_auc),
                fmt(e.val_audio_auc),
                fmt(e.val_whole_auc)
            )
            .unwrap();
        }
        s.push_str("--- json ---\n");
        s.push_str(&serde_json::to_string_pretty(self)?);
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.render()?)?;
        Ok(())
    }

    /// Parses the JSON block of a rendered report.
    pub fn parse(text: &str) -> Result<Self> {
        let (_, json) = text
            .split_once("--- json ---\n")
            .ok_or_else(|| Error::Format("report has no JSON block".into()))?;
        Ok(serde_json::from_str(json)?)
    }
}
