//! Training-time augmentations applied to one synthetic clip.

use ssavd::data::SynthConfig;
use ssavd::model::ModelConfig;
use ssavd::tensor::RngState;
use ssavd::train::{augment, hflip, jpeg_like, rotate, AugmentConfig};

fn main() {
    let cfg = SynthConfig::for_model(&ModelConfig::desk(), [1; 4], 5);
    let (v, a) = cfg.clip(3);
    println!("flip twice, max change      {:.2e}", hflip(&hflip(&v)).max_abs_diff(&v));
    println!("rotate 10 deg, max change   {:.3}", rotate(&v, 10.0).max_abs_diff(&v));
    for q in [90.0, 50.0, 10.0] {
        println!(
            "jpeg quality {q:>3}, max change {:.3}",
            jpeg_like(&v, q).max_abs_diff(&v)
        );
    }
    let (v2, a2) = augment(&v, &a, &mut RngState::new(7), &AugmentConfig::default());
    println!(
        "random augmentation: visual change {:.3}, audio change {:.4}",
        v2.max_abs_diff(&v),
        a2.max_abs_diff(&a)
    );
}
