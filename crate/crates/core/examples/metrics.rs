//! ACC and AUC with the fake class as positive, including tie handling and
//! the absent-AUC case.

use ssavd::train::{auc, TargetMetrics};

fn main() {
    let fake_scores = [0.9, 0.6, 0.65, 0.2];
    let is_fake = [true, true, false, false];
    println!("auc = {:?}", auc(&fake_scores, &is_fake));
    println!("all tied: auc = {:?}", auc(&[0.4; 4], &is_fake));

    // real-class probabilities from a detector
    let prob_real = [0.1, 0.4, 0.35, 0.8];
    let real = [false, false, true, true];
    println!("{:?}", TargetMetrics::compute(&prob_real, &real));
    println!(
        "one class only: {:?}",
        TargetMetrics::compute(&[0.7, 0.9], &[true, true])
    );
}
