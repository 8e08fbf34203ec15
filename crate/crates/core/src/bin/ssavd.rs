//! Command-line front end. Exit codes: 0 success, 1 validation failure, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use ssavd::checks::gradient_suite;
use ssavd::data::{read_tensor, write_synth_dataset, ClipSource, DirSource, ManifestRecord, SynthConfig};
use ssavd::model::{count_params, load_checkpoint, save_checkpoint, Detector, ModelConfig};
use ssavd::objective::{LossConfig, Toggles};
use ssavd::tensor::Tensor;
use ssavd::train::{evaluate, train, AugmentConfig, TrainPlan};
use ssavd::{Error, Result};

/// Environment variable holding the default seed.
const SEED_ENV: &str = "SSAVD_SEED";

fn default_seed() -> u64 {
    std::env::var(SEED_ENV).ok().and_then(|s| s.parse().ok()).unwrap_or(0)
}

#[derive(Parser)]
#[command(name = "ssavd", version, about = "Single-stream audio-visual deepfake detector")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic four-type dataset with a stratified split.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Clips per type (FakeV-FakeA, FakeV-RealA, RealV-FakeA, RealV-RealA):
        /// one number for all four, or four comma-separated numbers.
        #[arg(long, default_value = "200")]
        counts: String,
        #[arg(long, default_value_t = default_seed())]
        seed: u64,
        #[arg(long, default_value = "desk")]
        preset: String,
    },
    /// Train on a dataset directory; writes best.ckpt, last.ckpt, report.txt.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "desk")]
        preset: String,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = default_seed())]
        seed: u64,
        /// `all`, an ablation row `a`-`f`, `none`, or a list such as `lsa,mmssa,adv,con`.
        #[arg(long, default_value = "all")]
        toggles: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5e-4)]
        lr0: f64,
        #[arg(long, default_value_t = 1e-4)]
        lr1: f64,
        #[arg(long)]
        no_augment: bool,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a checkpoint on one split of a dataset directory.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// `train`, `val`, `test` or `manifest`.
        #[arg(long, default_value = "test")]
        split: String,
        /// Report path (default: <data>/report.<split>.txt).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Real-class probabilities of one clip, as JSON.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        audio: PathBuf,
    },
    /// Trainable parameter count with per-component breakdown.
    Params {
        #[arg(long, default_value = "paper")]
        preset: String,
        #[arg(long)]
        json: bool,
    },
    /// Finite-difference gradient checks of every layer and loss term.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

fn parse_counts(s: &str) -> Result<[usize; 4]> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("bad --counts {s:?}: {e}")))?;
    match parts.as_slice() {
        [n] => Ok([*n; 4]),
        [a, b, c, d] => Ok([*a, *b, *c, *d]),
        _ => Err(Error::Config(format!("--counts takes one or four numbers, got {s:?}"))),
    }
}

fn indices(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Synth {
            out,
            counts,
            seed,
            preset,
        } => {
            let cfg = ModelConfig::preset(&preset)?;
            let sc = SynthConfig::for_model(&cfg, parse_counts(&counts)?, seed);
            let sp = write_synth_dataset(&out, &sc)?;
            println!(
                "wrote {} clips to {} (train {}, val {}, test {})",
                sc.len(),
                out.display(),
                sp.train.len(),
                sp.val.len(),
                sp.test.len()
            );
        }
        Cmd::Train {
            data,
            preset,
            epochs,
            batch,
            seed,
            toggles,
            out,
            lr0,
            lr1,
            no_augment,
            max_steps,
            quiet,
        } => {
            let cfg = ModelConfig::preset(&preset)?;
            let plan = TrainPlan {
                epochs,
                batch_size: batch,
                lr0,
                lr1,
                seed,
                loss: LossConfig::with_toggles(Toggles::parse(&toggles)?),
                augment: if no_augment {
                    AugmentConfig::off()
                } else {
                    AugmentConfig::default()
                },
                max_steps,
                verbose: !quiet,
                ..TrainPlan::default()
            };
            plan.validate()?;
            let tr = DirSource::open(&data, "train")?;
            let va = DirSource::open(&data, "val")?;
            check_dims(&tr, &cfg)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("plan.json"), serde_json::to_string_pretty(&plan)?)?;
            let model = Detector::new(cfg, seed)?;
            // validation lives in its own manifest; train against a merged index space
            let merged = Merged {
                a: &tr,
                b: &va,
                records: [tr.records(), va.records()].concat(),
            };
            let train_idx = indices(tr.len());
            let val_idx: Vec<usize> = (tr.len()..tr.len() + va.len()).collect();
            let outcome = train(model, &merged, &train_idx, &val_idx, &plan, Some(&out))?;
            save_checkpoint(out.join("last.ckpt"), &outcome.last)?;
            let mut report = if val_idx.is_empty() {
                evaluate(&outcome.best, &merged, &train_idx)?
            } else {
                evaluate(&outcome.best, &merged, &val_idx)?
            };
            report.loss_curve = outcome.log;
            report.write(out.join("report.txt"))?;
            println!(
                "best epoch {} of {}; checkpoints and report in {}",
                outcome.best_epoch,
                epochs,
                out.display()
            );
        }
        Cmd::Eval {
            ckpt,
            data,
            split,
            report,
        } => {
            let model: Detector<f32> = load_checkpoint(&ckpt, None)?;
            let src = DirSource::open(&data, &split)?;
            check_dims(&src, model.config())?;
            let r = evaluate(&model, &src, &indices(src.len()))?;
            let path = report.unwrap_or_else(|| data.join(format!("report.{split}.txt")));
            r.write(&path)?;
            print!("{}", r.render()?);
        }
        Cmd::Infer { ckpt, video, audio } => {
            let model: Detector<f32> = load_checkpoint(&ckpt, None)?;
            let v = read_tensor::<f32>(&video)?;
            let a = read_tensor::<f32>(&audio)?;
            let p = model.predict(&v, &a)?;
            println!("{}", json!({ "visual": p.visual, "audio": p.audio, "whole": p.whole }));
        }
        Cmd::Params { preset, json } => {
            let c = count_params(&ModelConfig::preset(&preset)?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&c)?);
            } else {
                for (name, n) in &c.breakdown {
                    println!("{name:<24}{n:>10}");
                }
                println!("{:<24}{:>10}", "total", c.total);
            }
        }
        Cmd::Gradcheck { seeds } => {
            let rows = gradient_suite(seeds)?;
            println!(
                "{:<26}{:>6}{:>14}{:>10}  result",
                "check", "seeds", "max rel err", "tol"
            );
            let mut failed = 0;
            for r in &rows {
                println!(
                    "{:<26}{:>6}{:>14.3e}{:>10.0e}  {}",
                    r.name,
                    r.seeds,
                    r.max_rel_err,
                    r.tol,
                    if r.passes() { "pass" } else { "FAIL" }
                );
                failed += usize::from(!r.passes());
            }
            if failed > 0 {
                return Err(Error::Contract(format!("{failed} gradient checks failed")));
            }
        }
    }
    Ok(())
}

fn check_dims(src: &dyn ClipSource, cfg: &ModelConfig) -> Result<()> {
    if src.is_empty() {
        return Err(Error::Data("empty manifest".into()));
    }
    let (v, a) = src.load(0)?;
    if v.dims() != cfg.visual_input_dims() || a.dims() != cfg.audio_input_dims() {
        return Err(Error::Data(format!(
            "clips are {:?} / {:?} but the model expects {:?} / {:?}",
            v.dims(),
            a.dims(),
            cfg.visual_input_dims(),
            cfg.audio_input_dims()
        )));
    }
    Ok(())
}

/// Two manifests of one directory behind one index space.
struct Merged<'a> {
    a: &'a DirSource,
    b: &'a DirSource,
    records: Vec<ManifestRecord>,
}

impl ClipSource for Merged<'_> {
    fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    fn load(&self, i: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
        if i < self.a.len() {
            self.a.load(i)
        } else {
            self.b.load(i - self.a.len())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
