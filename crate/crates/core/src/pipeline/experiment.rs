//! Training, evaluation and ablation grids over generated datasets.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{metrics, ConfusionMatrix, Metrics};
use crate::nn::{checkpoint, train_with_callback, Architecture, History, Network, NetworkConfig};
use crate::pipeline::config::{ChannelMode, RunConfig};
use crate::pipeline::dataset::{load_samples, simulate, write_dataset, write_json, Manifest, Split};
use crate::preprocess::StrategyKind;

pub const MODEL_FILE: &str = "model.pvgw";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const GRID_FILE: &str = "grid.csv";

/// Trains `architecture` on the dataset in `data_dir` and writes the model
/// and its history into `run_dir`.
pub fn train_dataset(
    cfg: &RunConfig,
    data_dir: &Path,
    run_dir: &Path,
    architecture: Architecture,
    channels: ChannelMode,
    mut on_epoch: impl FnMut(&crate::nn::EpochRecord),
) -> Result<(Network<f32>, History)> {
    let manifest = Manifest::read(data_dir)?;
    let split = Split::read(data_dir)?;
    let train_set = load_samples(data_dir, &manifest, &split.train, channels)?;
    let val_set = load_samples(data_dir, &manifest, &split.val, channels)?;
    let size = train_set.x.first().map(|x| x.h).ok_or_else(|| Error::InvalidParameter("empty train split".into()))?;
    let mut net = Network::<f32>::new(NetworkConfig {
        architecture,
        n_classes: manifest.classes.len(),
        in_channels: channels.indices().len(),
        input_size: size,
        seed: cfg.seed,
        ..NetworkConfig::default()
    })?;
    let history = train_with_callback(&mut net, &train_set, Some(&val_set), &cfg.train_config(), &mut on_epoch)?;
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    checkpoint::save(&net, &run_dir.join(MODEL_FILE))?;
    history.write_csv(&run_dir.join(HISTORY_FILE))?;
    Ok((net, history))
}

/// Test-split metrics of `net`; writes the metrics JSON and confusion CSV.
pub fn evaluate_dataset(net: &Network<f32>, data_dir: &Path, run_dir: &Path, channels: ChannelMode) -> Result<Metrics> {
    let manifest = Manifest::read(data_dir)?;
    let split = Split::read(data_dir)?;
    let test = load_samples(data_dir, &manifest, &split.test, channels)?;
    let pred: Vec<usize> = test.x.par_iter().map(|x| net.predict(x)).collect::<Result<_>>()?;
    let cm = ConfusionMatrix::from_predictions(manifest.classes.len(), &test.y, &pred)?;
    let m = metrics(&cm)?;
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let path = run_dir.join(CONFUSION_FILE);
    std::fs::write(&path, cm.to_csv(&manifest.class_names())).map_err(|e| Error::io(&path, e))?;
    write_json(&run_dir.join(METRICS_FILE), &m)?;
    Ok(m)
}

/// Outcome of one train-and-evaluate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub strategy: StrategyKind,
    pub channels: ChannelMode,
    pub architecture: Architecture,
    pub metrics: Metrics,
    pub history: History,
}

/// Trains and evaluates the configured model on the dataset already
/// generated in the output directory.
pub fn run_experiment(cfg: &RunConfig) -> Result<Report> {
    let dir = &cfg.output_dir;
    let (net, history) = train_dataset(cfg, dir, dir, cfg.architecture, cfg.channels, |_| {})?;
    let metrics = evaluate_dataset(&net, dir, dir, cfg.channels)?;
    let strategy = Manifest::read(dir)?.strategy;
    Ok(Report { strategy, channels: cfg.channels, architecture: cfg.architecture, metrics, history })
}

/// Every `strategy x channels x architecture` combination of the grid
/// section; curves are simulated once and featurized per strategy. Writes one
/// comparison table to `grid.csv` in the output directory.
pub fn grid(cfg: &RunConfig, mut progress: impl FnMut(&Report)) -> Result<Vec<Report>> {
    let sim = simulate(cfg)?;
    let root = &cfg.output_dir;
    let mut reports = Vec::new();
    for &strategy in &cfg.grid.strategies {
        let data_dir = root.join(format!("data_{strategy}"));
        write_dataset(cfg, strategy, &sim, &data_dir)?;
        for &channels in &cfg.grid.channels {
            for &architecture in &cfg.grid.architectures {
                let run_dir = root.join(format!("run_{strategy}_{channels}_{architecture}"));
                let (net, history) = train_dataset(cfg, &data_dir, &run_dir, architecture, channels, |_| {})?;
                let metrics = evaluate_dataset(&net, &data_dir, &run_dir, channels)?;
                let report = Report { strategy, channels, architecture, metrics, history };
                progress(&report);
                reports.push(report);
            }
        }
    }
    let path = root.join(GRID_FILE);
    std::fs::write(&path, grid_csv(&reports)).map_err(|e| Error::io(&path, e))?;
    Ok(reports)
}

pub fn grid_csv(reports: &[Report]) -> String {
    let mut out = String::from("strategy,channels,architecture,accuracy,precision,recall,f1,epochs,best_epoch\n");
    for r in reports {
        let m = &r.metrics;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.strategy,
            r.channels,
            r.architecture,
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            r.history.epochs.len(),
            r.history.best_epoch
        ));
    }
    out
}
