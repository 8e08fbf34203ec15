//! Optimisation, augmentation, the training loop and evaluation metrics.

mod augment;
mod metrics;
mod optim;
mod trainer;

pub use augment::{augment, hflip, jpeg_like, rotate, AugmentConfig};
pub use metrics::{accuracy, auc, EpochLog, MetricReport, TargetMetrics};
pub use optim::{lr_schedule, AdamWConfig, OptimState};
pub use trainer::{evaluate, train, train_step, TrainOutcome, TrainPlan, EVAL_CHUNK};
