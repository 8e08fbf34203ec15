//! A short training run on in-memory synthetic clips with the tiny preset,
//! then evaluation and a checkpoint round trip.

use ssavd::data::{split, ClipSource, SynthConfig, SynthSource, PAPER_RATIOS};
use ssavd::model::{read_checkpoint, write_checkpoint, Detector, ModelConfig};
use ssavd::objective::{LossConfig, Toggles};
use ssavd::train::{evaluate, train, TrainPlan};

fn main() -> ssavd::Result<()> {
    let cfg = ModelConfig::tiny();
    let src = SynthSource::new(SynthConfig::for_model(&cfg, [12; 4], 1))?;
    let sp = split(src.records(), PAPER_RATIOS, 1)?;
    let row = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    let plan = TrainPlan {
        epochs: 4,
        batch_size: 8,
        seed: 1,
        loss: LossConfig::with_toggles(Toggles::parse(&row)?),
        verbose: true,
        ..TrainPlan::default()
    };
    let out = train(Detector::new(cfg.clone(), 1)?, &src, &sp.train, &sp.val, &plan, None)?;
    let report = evaluate(&out.best, &src, &sp.test)?;
    print!("{}", report.render()?.split("--- json").next().unwrap_or_default());

    let bytes = write_checkpoint(&out.best)?;
    let back: Detector<f32> = read_checkpoint(&bytes, Some(&cfg))?;
    let (v, a) = src.load(sp.test[0])?;
    println!(
        "checkpoint {} bytes; reloaded prediction {:?}",
        bytes.len(),
        back.predict(&v, &a)?
    );
    Ok(())
}
