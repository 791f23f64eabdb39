//! End-to-end orchestration: dataset generation, splits, training runs,
//! ablation grids, curve correction and image export.

pub mod config;
pub mod correct;
pub mod dataset;
pub mod experiment;
pub mod features;

use std::path::Path;

pub use config::{ChannelMode, CorrectionProcedure, RunConfig, Scenario, SplitFractions};
pub use correct::{correct_cmd, rms_deviation, CorrectionRow};
pub use dataset::{generate, simulate, split, stratified_split, verify, write_dataset, Manifest, SampleRecord, Split};
pub use experiment::{evaluate_dataset, grid, run_experiment, train_dataset, Report};

use crate::error::{Error, Result};
use crate::preprocess::write_channel_png;

pub const IMAGE_DIR: &str = "images";

/// Writes grayscale PNGs of both channels for the first `per_class` samples
/// of every class (all samples when `None`). Returns the number of images.
pub fn export_images(data_dir: &Path, out_dir: &Path, per_class: Option<usize>) -> Result<usize> {
    let manifest = Manifest::read(data_dir)?;
    let dir = out_dir.join(IMAGE_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut taken = vec![0usize; manifest.classes.len()];
    let mut written = 0;
    for record in &manifest.samples {
        let label = manifest.label(record);
        if per_class.is_some_and(|n| taken[label] >= n) {
            continue;
        }
        taken[label] += 1;
        let (t, _) = features::read(&data_dir.join(&record.file))?;
        for (ch, tag) in ["iv", "pv"].iter().enumerate().take(t.channels) {
            write_channel_png(&t, ch, &dir.join(format!("{:06}_{}_{tag}.png", record.id, record.class.name())))?;
            written += 1;
        }
    }
    Ok(written)
}
