use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use pvgadf::env::EnvSeries;
use pvgadf::nn::checkpoint;
use pvgadf::pipeline::{self, experiment, Manifest, RunConfig};
use pvgadf::{Error, Result};

/// PV array fault simulation and GADF/CBAM-CNN fault classification.
#[derive(Parser)]
#[command(name = "pvgadf", version)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate curves, write feature files, manifest and split.
    Generate,
    /// Recompute the stratified split of the dataset in the output directory.
    Split,
    /// Train the configured architecture on the generated dataset.
    Train,
    /// Evaluate the trained model on the test split.
    Evaluate,
    /// Sweep strategy x channels x architecture and write a comparison table.
    Grid,
    /// Translate curves to other conditions and report deviations.
    Correct,
    /// Write feature channels as grayscale PNGs.
    ExportImages {
        /// Samples per class to export (default: all).
        #[arg(long)]
        per_class: Option<usize>,
    },
    /// Write a synthetic year of hourly environmental records as CSV.
    SynthEnv,
    /// Regenerate every feature file from the manifest and compare checksums.
    Verify,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    let cfg = load_config(cli)?;
    let dir = &cfg.output_dir;
    Ok(match &cli.command {
        Command::Generate => {
            let m = pipeline::generate(&cfg)?;
            json!({ "samples": m.samples.len(), "env_skipped": m.env_skipped, "limits": m.limits, "dir": dir })
        }
        Command::Split => {
            let s = pipeline::split(&Manifest::read(dir)?)?;
            s.write(dir)?;
            json!({ "train": s.train.len(), "val": s.val.len(), "test": s.test.len() })
        }
        Command::Train => {
            let (_, h) = experiment::train_dataset(&cfg, dir, dir, cfg.architecture, cfg.channels, |r| {
                eprintln!(
                    "epoch {:>3}  loss {:.4}  acc {:.4}  val_loss {:.4}  val_acc {:.4}",
                    r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
                );
            })?;
            json!({ "epochs": h.epochs.len(), "best_epoch": h.best_epoch, "stopped_early": h.stopped_early })
        }
        Command::Evaluate => {
            let net = checkpoint::load(&dir.join(experiment::MODEL_FILE))?;
            let m = experiment::evaluate_dataset(&net, dir, dir, cfg.channels)?;
            json!({ "accuracy": m.accuracy, "precision": m.precision, "recall": m.recall, "f1": m.f1 })
        }
        Command::Grid => {
            let reports = pipeline::grid(&cfg, |r| {
                eprintln!("{} {} {}: accuracy {:.4}", r.strategy, r.channels, r.architecture, r.metrics.accuracy);
            })?;
            json!({ "runs": reports.len(), "table": dir.join(experiment::GRID_FILE) })
        }
        Command::Correct => {
            let rows = pipeline::correct_cmd(&cfg)?;
            json!({ "curves": rows.len(), "rms_relative": rows.iter().map(|r| r.rms_relative).collect::<Vec<_>>() })
        }
        Command::ExportImages { per_class } => {
            json!({ "images": pipeline::export_images(dir, dir, *per_class)? })
        }
        Command::SynthEnv => {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
            let path = dir.join("env.csv");
            EnvSeries::synthetic_year(cfg.seed).write_csv(&path)?;
            json!({ "path": path })
        }
        Command::Verify => {
            let bad = pipeline::verify(&Manifest::read(dir)?)?;
            if !bad.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "{} feature files differ from their checksum: {bad:?}",
                    bad.len()
                )));
            }
            json!({ "verified": true })
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
