//! Trainable parameter counts of every preset, with the per-component breakdown
//! of the full-size configuration.

use ssavd::model::{count_params, ModelConfig};

fn main() -> ssavd::Result<()> {
    for preset in ["paper", "desk", "tiny"] {
        let c = count_params(&ModelConfig::preset(preset)?)?;
        println!("{preset:<6} {:>9} parameters", c.total);
    }
    let c = count_params(&ModelConfig::paper())?;
    println!();
    for (name, n) in &c.breakdown {
        println!("  {name:<24}{n:>9}");
    }
    Ok(())
}
