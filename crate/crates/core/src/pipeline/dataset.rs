//! Dataset generation, manifests and stratified splits.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{array_iv_curve, ArrayConfig};
use crate::env::{drive_series, mix_seed, EnvSeries, LabeledCurve};
use crate::error::{Error, Result};
use crate::fault::{sample_fault, FaultClass, FaultSpec};
use crate::model::EnvCondition;
use crate::nn::{Dataset, Tensor3};
use crate::pipeline::config::{ChannelMode, RunConfig, Scenario, SplitFractions};
use crate::pipeline::features;
use crate::preprocess::{measured_voc, stacked_feature, Limits, NormalizationStrategy, StrategyKind};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPLIT_FILE: &str = "split.json";
pub const FEATURE_DIR: &str = "features";
pub const MANIFEST_VERSION: u32 = 1;
/// Smallest class that can be split three ways.
pub const MIN_CLASS_SIZE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: usize,
    pub class: FaultClass,
    pub env_index: usize,
    pub env: EnvCondition,
    pub fault: FaultSpec,
    pub seed: u64,
    /// Short-circuit current and open-circuit voltage of the simulated curve.
    pub isc: f64,
    pub voc: f64,
    /// Feature file, relative to the dataset directory.
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub scenario: Scenario,
    pub classes: Vec<FaultClass>,
    pub array: ArrayConfig,
    pub strategy: StrategyKind,
    /// Dataset-wide limits of the Global strategy, from the train split.
    pub limits: Option<Limits>,
    pub seed: u64,
    pub samples_per_class: usize,
    pub n_points: usize,
    pub g_floor: f64,
    pub split: SplitFractions,
    /// Path of the environmental CSV, or `synthetic:<seed>`.
    pub env_source: String,
    pub env_records: usize,
    /// Records skipped for falling below `g_floor`.
    pub env_skipped: usize,
    pub samples: Vec<SampleRecord>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format { path, reason: e.to_string() })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    /// Class index of `record` within this dataset.
    pub fn label(&self, record: &SampleRecord) -> usize {
        self.classes.iter().position(|&c| c == record.class).expect("class belongs to the scenario")
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name().to_string()).collect()
    }

    fn strategy_with_limits(&self) -> Result<NormalizationStrategy> {
        Ok(match self.strategy {
            StrategyKind::Normal => NormalizationStrategy::Normal,
            StrategyKind::IscVoc => NormalizationStrategy::IscVoc,
            StrategyKind::Global => NormalizationStrategy::Global(
                self.limits.ok_or_else(|| Error::Config("Global manifest without limits".into()))?,
            ),
        })
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Simulated curves shared by every featurization of one configuration.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub curves: Vec<LabeledCurve>,
    pub env_source: String,
    pub env_records: usize,
    pub env_skipped: usize,
}

pub fn load_env(cfg: &RunConfig) -> Result<(EnvSeries, String)> {
    match &cfg.env_csv_path {
        Some(p) => Ok((EnvSeries::read_csv(p)?, p.display().to_string())),
        None => Ok((EnvSeries::synthetic_year(cfg.seed), format!("synthetic:{}", cfg.seed))),
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<Simulation> {
    cfg.validate()?;
    let (series, env_source) = load_env(cfg)?;
    let usable = series.usable_indices(cfg.g_floor).len();
    let curves = drive_series(
        &cfg.array(),
        cfg.scenario.classes(),
        &series,
        cfg.samples_per_class,
        cfg.seed,
        cfg.g_floor,
        cfg.n_points,
    )?;
    Ok(Simulation { curves, env_source, env_records: series.len(), env_skipped: series.len() - usable })
}

/// Train, validation and test sample ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(SPLIT_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format { path, reason: e.to_string() })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(SPLIT_FILE), self)
    }
}

/// Per-class sizes `(train, val, test)` of a class with `n` samples: test
/// and validation counts are rounded, the remainder goes to training.
pub fn split_sizes(n: usize, f: &SplitFractions) -> (usize, usize, usize) {
    let test = (n as f64 * f.test_fraction).round() as usize;
    let val = (n as f64 * (1.0 - f.test_fraction) * f.val_fraction_of_train).round() as usize;
    (n - test - val, val, test)
}

/// Stratified split of samples labelled `classes` (one entry per sample id).
/// Each class is shuffled with its own seed; ids in every part are ascending.
pub fn stratified_split(classes: &[FaultClass], f: &SplitFractions, seed: u64) -> Result<Split> {
    if classes.is_empty() {
        return Err(Error::InvalidParameter("cannot split an empty dataset".into()));
    }
    let mut present: Vec<FaultClass> = classes.to_vec();
    present.sort();
    present.dedup();
    let mut split = Split::default();
    for class in present {
        let mut ids: Vec<usize> = (0..classes.len()).filter(|&k| classes[k] == class).collect();
        if ids.len() < MIN_CLASS_SIZE {
            return Err(Error::ClassTooSmall { class: class.name().into(), count: ids.len(), min: MIN_CLASS_SIZE });
        }
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x7370_6c74, class.id() as u64)));
        let (_, val, test) = split_sizes(ids.len(), f);
        split.test.extend_from_slice(&ids[..test]);
        split.val.extend_from_slice(&ids[test..test + val]);
        split.train.extend_from_slice(&ids[test + val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// The split recorded by a manifest's seed and fractions.
pub fn split(manifest: &Manifest) -> Result<Split> {
    let classes: Vec<FaultClass> = manifest.samples.iter().map(|s| s.class).collect();
    stratified_split(&classes, &manifest.split, manifest.seed)
}

/// Largest short-circuit current and open-circuit voltage over `ids`.
pub fn limits_of(records: &[(f64, f64)], ids: &[usize]) -> Limits {
    let mut l = Limits { isc: 0.0, voc: 0.0 };
    for &k in ids {
        l.isc = l.isc.max(records[k].0);
        l.voc = l.voc.max(records[k].1);
    }
    l
}

fn feature_file(id: usize) -> String {
    format!("{FEATURE_DIR}/{id:06}.pvgf")
}

/// Featurizes `sim` with `strategy` and writes features, manifest and split
/// into `dir`.
pub fn write_dataset(cfg: &RunConfig, strategy: StrategyKind, sim: &Simulation, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir.join(FEATURE_DIR)).map_err(|e| Error::io(dir, e))?;
    let classes: Vec<FaultClass> = sim.curves.iter().map(|c| c.class).collect();
    let split = stratified_split(&classes, &cfg.split, cfg.seed)?;
    let extremes: Vec<(f64, f64)> = sim.curves.iter().map(|c| (c.curve.isc(), measured_voc(&c.curve))).collect();
    let limits = (strategy == StrategyKind::Global).then(|| limits_of(&extremes, &split.train));
    let mut manifest = Manifest {
        version: MANIFEST_VERSION,
        scenario: cfg.scenario,
        classes: cfg.scenario.classes().to_vec(),
        array: cfg.array(),
        strategy,
        limits,
        seed: cfg.seed,
        samples_per_class: cfg.samples_per_class,
        n_points: cfg.n_points,
        g_floor: cfg.g_floor,
        split: cfg.split,
        env_source: sim.env_source.clone(),
        env_records: sim.env_records,
        env_skipped: sim.env_skipped,
        samples: Vec::new(),
    };
    let norm = manifest.strategy_with_limits()?;
    let array = manifest.array;
    manifest.samples = sim
        .curves
        .par_iter()
        .enumerate()
        .map(|(id, lc)| {
            let bytes = features::encode(&stacked_feature(&lc.curve, &array, &norm)?, lc.class.id());
            let file = feature_file(id);
            let path = dir.join(&file);
            std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            Ok(SampleRecord {
                id,
                class: lc.class,
                env_index: lc.env_index,
                env: lc.curve.env,
                fault: lc.fault.clone(),
                seed: lc.seed,
                isc: extremes[id].0,
                voc: extremes[id].1,
                file,
                sha256: features::sha256_hex(&bytes),
            })
        })
        .collect::<Result<_>>()?;
    manifest.write(dir)?;
    split.write(dir)?;
    Ok(manifest)
}

/// Simulates and featurizes `cfg` into its output directory.
pub fn generate(cfg: &RunConfig) -> Result<Manifest> {
    let sim = simulate(cfg)?;
    write_dataset(cfg, cfg.strategy, &sim, &cfg.output_dir)
}

/// Feature bytes of one record, rebuilt from its seed and condition alone.
pub fn regenerate_record(manifest: &Manifest, record: &SampleRecord) -> Result<Vec<u8>> {
    let fault = sample_fault(record.class, &manifest.array, record.seed);
    if fault != record.fault {
        return Err(Error::InvalidParameter(format!("sample {}: fault parameters do not match its seed", record.id)));
    }
    let curve = array_iv_curve(&manifest.array, &fault, &record.env, manifest.n_points)?;
    let t = stacked_feature(&curve, &manifest.array, &manifest.strategy_with_limits()?)?;
    Ok(features::encode(&t, record.class.id()))
}

/// Ids whose regenerated features differ from the manifest checksum.
pub fn verify(manifest: &Manifest) -> Result<Vec<usize>> {
    let bad: Vec<Option<usize>> = manifest
        .samples
        .par_iter()
        .map(|r| Ok((features::sha256_hex(&regenerate_record(manifest, r)?) != r.sha256).then_some(r.id)))
        .collect::<Result<_>>()?;
    Ok(bad.into_iter().flatten().collect())
}

/// Loads the samples `ids` with the channels of `mode`.
pub fn load_samples(dir: &Path, manifest: &Manifest, ids: &[usize], mode: ChannelMode) -> Result<Dataset<f32>> {
    let picked = mode.indices();
    let loaded: Vec<(Tensor3<f32>, usize)> = ids
        .par_iter()
        .map(|&id| {
            let record = manifest
                .samples
                .get(id)
                .ok_or_else(|| Error::InvalidParameter(format!("sample id {id} not in manifest")))?;
            let path: PathBuf = dir.join(&record.file);
            let (t, class) = features::read(&path)?;
            if class != record.class.id() {
                return Err(Error::Format {
                    path,
                    reason: format!("class id {class} != manifest {}", record.class.id()),
                });
            }
            let hwc: Vec<f32> =
                t.data.chunks_exact(t.channels).flat_map(|px| picked.iter().map(move |&c| px[c])).collect();
            Ok((Tensor3::from_hwc(t.size, t.size, picked.len(), &hwc)?, manifest.label(record)))
        })
        .collect::<Result<_>>()?;
    let mut data = Dataset::default();
    for (x, y) in loaded {
        data.push(x, y);
    }
    Ok(data)
}
