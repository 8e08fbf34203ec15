//! Real-class probabilities of one clip from a freshly initialised desk model.
//! With `--ckpt PATH` the parameters are loaded from a checkpoint instead.

use ssavd::data::SynthConfig;
use ssavd::model::{load_checkpoint, Detector, ModelConfig};

fn main() -> ssavd::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let model: Detector<f32> = match args.iter().position(|a| a == "--ckpt") {
        Some(i) => load_checkpoint(&args[i + 1], None)?,
        None => Detector::new(ModelConfig::desk(), 0)?,
    };
    let synth = SynthConfig::for_model(model.config(), [1; 4], 2);
    for i in 0..4 {
        let (v, a) = synth.clip(i);
        let p = model.predict(&v, &a)?;
        println!(
            "{:<12} visual {:.3} audio {:.3} whole {:.3}",
            synth.type_of(i).name(),
            p.visual,
            p.audio,
            p.whole
        );
    }
    Ok(())
}
