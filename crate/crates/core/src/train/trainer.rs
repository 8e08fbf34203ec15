//! The training loop and evaluation.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::ClipSource;
use crate::error::{Error, Result};
use crate::model::{save_checkpoint, Detector};
use crate::objective::{training_objective, BatchShufflePlan, LabelTriple, LossConfig, LossParts};
use crate::tensor::{Graph, RngState, Scalar, Tensor};

use super::augment::{augment, AugmentConfig};
use super::metrics::{EpochLog, MetricReport, TargetMetrics};
use super::optim::{lr_schedule, AdamWConfig, OptimState};

// stream tags for RngState::derive
const TAG_ORDER: u64 = 1;
const TAG_PLAN: u64 = 2;
const TAG_AUGMENT: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr1: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub adamw: AdamWConfig,
    /// Stop after this many optimisation steps (the LR schedule still spans `epochs`).
    pub max_steps: Option<usize>,
    /// Per-epoch progress on stderr.
    pub verbose: bool,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            lr0: 5e-4,
            lr1: 1e-4,
            seed: 0,
            loss: LossConfig::default(),
            augment: AugmentConfig::default(),
            adamw: AdamWConfig::default(),
            max_steps: None,
            verbose: false,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if !(self.lr0 > 0.0 && self.lr1 > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        self.loss.validate()
    }
}

pub struct TrainOutcome {
    /// Parameters at the best validation whole-video AUC (the last epoch
    /// when there is no validation set).
    pub best: Detector<f32>,
    pub best_epoch: usize,
    /// Parameters after the last step.
    pub last: Detector<f32>,
    pub log: Vec<EpochLog>,
    pub steps: usize,
}

fn labels_of(source: &dyn ClipSource, idx: &[usize]) -> Vec<LabelTriple> {
    idx.iter()
        .map(|&i| {
            let r = &source.records()[i];
            LabelTriple::new(r.y_v == 1, r.y_a == 1)
        })
        .collect()
}

/// One optimisation step on a batch of (already augmented) clips.
pub fn train_step(
    model: &mut Detector<f32>,
    opt: &mut OptimState,
    clips: &[(Tensor<f32>, Tensor<f32>)],
    labels: &[LabelTriple],
    plan: &BatchShufflePlan,
    loss: &LossConfig,
    lr: f64,
) -> Result<LossParts> {
    let (parts, grads) = {
        let g = Graph::new();
        let p = model.params().bind(&g);
        let mut feats = Vec::with_capacity(clips.len());
        for (v, a) in clips {
            feats.push(model.backbone(&p, &g.constant(v.clone()), &g.constant(a.clone()))?);
        }
        let (fv, fa) = model.stack(&g, &feats)?;
        let obj = training_objective(model.heads(), &p, &fv, &fa, labels, plan, loss)?;
        let total = obj.total.value().item().as_f64();
        if !total.is_finite() {
            return Err(Error::NonFinite(format!("training loss is {total}")));
        }
        obj.total.backward()?;
        (obj.parts(), p.grads())
    };
    opt.step(model.params_mut(), &grads, lr)?;
    Ok(parts)
}

/// Trains `model` on `train_idx` of `source`, validating on `val_idx` after
/// every epoch. With `out` set, `best.ckpt` is rewritten whenever validation
/// improves, so an aborted run still leaves the last good parameters behind.
pub fn train(
    model: Detector<f32>,
    source: &dyn ClipSource,
    train_idx: &[usize],
    val_idx: &[usize],
    plan: &TrainPlan,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    plan.validate()?;
    if train_idx.len() < plan.batch_size {
        return Err(Error::Data(format!(
            "{} training clips cannot fill one batch of {}",
            train_idx.len(),
            plan.batch_size
        )));
    }
    let ckpt_path: Option<PathBuf> = out.map(|d| d.join("best.ckpt"));
    if let Some(d) = out {
        std::fs::create_dir_all(d)?;
    }
    let master = RngState::new(plan.seed);
    let mut model = model;
    let mut opt = OptimState::new(model.params(), plan.adamw);
    let mut best: Option<(f64, usize, Detector<f32>)> = None;
    let mut log = Vec::with_capacity(plan.epochs);
    let mut steps = 0;
    'epochs: for epoch in 0..plan.epochs {
        let started = Instant::now();
        let lr = lr_schedule(epoch, plan.epochs, plan.lr0, plan.lr1)?;
        let mut order = train_idx.to_vec();
        master.derive(&[TAG_ORDER, epoch as u64]).shuffle(&mut order);
        let mut sums = LossParts::default();
        let mut epoch_steps = 0;
        // incomplete trailing batches are dropped
        for (b, chunk) in order.chunks_exact(plan.batch_size).enumerate() {
            if plan.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let mut clips = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (v, a) = source.load(i)?;
                let mut rng = master.derive(&[TAG_AUGMENT, epoch as u64, i as u64]);
                clips.push(augment(&v, &a, &mut rng, &plan.augment));
            }
            let labels = labels_of(source, chunk);
            let shuffle =
                BatchShufflePlan::sample(chunk.len(), &mut master.derive(&[TAG_PLAN, epoch as u64, b as u64]));
            let parts =
                train_step(&mut model, &mut opt, &clips, &labels, &shuffle, &plan.loss, lr).map_err(|e| match e {
                    Error::NonFinite(msg) => Error::NonFinite(format!(
                        "{msg} at epoch {epoch}, step {steps}; last good checkpoint: {}",
                        ckpt_path.as_ref().map_or("none".into(), |p| p.display().to_string())
                    )),
                    other => other,
                })?;
            sums.cls += parts.cls;
            sums.adv += parts.adv;
            sums.con += parts.con;
            epoch_steps += 1;
            steps += 1;
        }
        if epoch_steps == 0 {
            break 'epochs;
        }
        let k = epoch_steps as f64;
        let mean = LossParts {
            cls: sums.cls / k,
            adv: sums.adv / k,
            con: sums.con / k,
        };
        let val = if val_idx.is_empty() {
            None
        } else {
            Some(evaluate(&model, source, val_idx)?)
        };
        let val_auc = |f: fn(&MetricReport) -> &TargetMetrics| val.as_ref().and_then(|r| f(r).auc);
        let val_whole_auc = val_auc(|r| &r.whole);
        let entry = EpochLog {
            epoch,
            lr,
            steps: epoch_steps,
            loss: mean.total(plan.loss.gamma),
            cls: mean.cls,
            adv: mean.adv,
            con: mean.con,
            val_visual_auc: val_auc(|r| &r.visual),
            val_audio_auc: val_auc(|r| &r.audio),
            val_whole_auc,
        };
        if plan.verbose {
            eprintln!(
                "epoch {epoch:>3}  loss {:.4}  cls {:.4}  adv {:.4}  con {:.4}  val auc v/a/w {}/{}/{}  ({:.1}s)",
                entry.loss,
                entry.cls,
                entry.adv,
                entry.con,
                fmt_auc(entry.val_visual_auc),
                fmt_auc(entry.val_audio_auc),
                fmt_auc(val_whole_auc),
                started.elapsed().as_secs_f64()
            );
        }
        log.push(entry);
        // without validation every epoch counts as an improvement, so the last one wins
        let score = val_whole_auc.unwrap_or(f64::INFINITY);
        if best
            .as_ref()
            .is_none_or(|(s, _, _)| score > *s || score == f64::INFINITY)
        {
            if let Some(p) = &ckpt_path {
                save_checkpoint(p, &model)?;
            }
            best = Some((score, epoch, model.clone()));
        }
    }
    let (_, best_epoch, best_model) = best.ok_or_else(|| Error::Data("no training step was taken".into()))?;
    Ok(TrainOutcome {
        best: best_model,
        best_epoch,
        last: model,
        log,
        steps,
    })
}

fn fmt_auc(a: Option<f64>) -> String {
    a.map_or("-".into(), |a| format!("{a:.4}"))
}

/// Clips per inference graph in [`evaluate`].
pub const EVAL_CHUNK: usize = 16;

/// ACC and AUC of every head on `idx` of `source`.
pub fn evaluate(model: &Detector<f32>, source: &dyn ClipSource, idx: &[usize]) -> Result<MetricReport> {
    if idx.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let mut probs = [Vec::new(), Vec::new(), Vec::new()];
    for chunk in idx.chunks(EVAL_CHUNK) {
        let clips = chunk.iter().map(|&i| source.load(i)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<(&Tensor<f32>, &Tensor<f32>)> = clips.iter().map(|(v, a)| (v, a)).collect();
        for pr in model.predict_batch(&refs)? {
            probs[0].push(pr.visual);
            probs[1].push(pr.audio);
            probs[2].push(pr.whole);
        }
    }
    let labels = labels_of(source, idx);
    let real = |f: fn(&LabelTriple) -> bool| labels.iter().map(f).collect::<Vec<bool>>();
    Ok(MetricReport {
        samples: idx.len(),
        visual: TargetMetrics::compute(&probs[0], &real(|l| l.visual)),
        audio: TargetMetrics::compute(&probs[1], &real(|l| l.audio)),
        whole: TargetMetrics::compute(&probs[2], &real(|l| l.whole())),
        params: model.params().scalar_count(),
        loss_curve: Vec::new(),
    })
}
