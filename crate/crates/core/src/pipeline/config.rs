//! Run configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::array::ArrayConfig;
use crate::correction::CorrectionFactors;
use crate::env::DEFAULT_G_FLOOR;
use crate::error::{Error, Result};
use crate::fault::FaultClass;
use crate::nn::{Architecture, TrainConfig};
use crate::preprocess::StrategyKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// All 14 classes, including soiling compounds.
    #[serde(rename = "Case1_Soiling")]
    Case1Soiling,
    /// The 9 classes without soiling.
    #[serde(rename = "Case2_NoSoiling")]
    Case2NoSoiling,
}

impl Scenario {
    pub fn classes(self) -> &'static [FaultClass] {
        match self {
            Scenario::Case1Soiling => &FaultClass::ALL,
            Scenario::Case2NoSoiling => FaultClass::without_soiling(),
        }
    }
}

/// Which feature channels the classifier sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelMode {
    /// Current GADF only.
    #[serde(rename = "IV", alias = "Iv")]
    Iv,
    /// Power GADF only.
    #[serde(rename = "PV", alias = "Pv")]
    Pv,
    /// Both, stacked.
    #[serde(rename = "IV-PV", alias = "IvPv")]
    IvPv,
}

impl ChannelMode {
    pub const ALL: [ChannelMode; 3] = [ChannelMode::Iv, ChannelMode::Pv, ChannelMode::IvPv];

    /// Indices into the stored two-channel tensor.
    pub fn indices(self) -> &'static [usize] {
        match self {
            ChannelMode::Iv => &[0],
            ChannelMode::Pv => &[1],
            ChannelMode::IvPv => &[0, 1],
        }
    }
}

impl std::fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChannelMode::Iv => "IV",
            ChannelMode::Pv => "PV",
            ChannelMode::IvPv => "IV-PV",
        })
    }
}

impl std::str::FromStr for ChannelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "iv" => Ok(ChannelMode::Iv),
            "pv" => Ok(ChannelMode::Pv),
            "ivpv" => Ok(ChannelMode::IvPv),
            _ => Err(Error::InvalidParameter(format!("unknown channel mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub test_fraction: f64,
    pub val_fraction_of_train: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { test_fraction: 0.2, val_fraction_of_train: 0.1 }
    }
}

/// Optimizer settings; the shuffle seed comes from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            max_epochs: d.max_epochs,
            patience: d.patience,
            weight_decay: d.weight_decay,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            weight_decay: self.weight_decay,
            seed,
            ..TrainConfig::default()
        }
    }
}

/// Axes of the ablation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub strategies: Vec<StrategyKind>,
    pub channels: Vec<ChannelMode>,
    pub architectures: Vec<Architecture>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            strategies: vec![StrategyKind::Normal, StrategyKind::Global, StrategyKind::IscVoc],
            channels: ChannelMode::ALL.to_vec(),
            architectures: vec![Architecture::CbamCnn, Architecture::MultilayerCnn, Architecture::Ann],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub g: f64,
    pub t_celsius: f64,
}

impl EnvSpec {
    pub fn env(&self) -> crate::model::EnvCondition {
        crate::model::EnvCondition::from_celsius(self.g, self.t_celsius)
    }
}

/// A curve to translate: read from `path`, or simulated for `class` at
/// the given condition when no path is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveInput {
    pub path: Option<PathBuf>,
    pub g: f64,
    pub t_celsius: f64,
    #[serde(default = "healthy")]
    pub class: FaultClass,
    /// Second curve of the interpolation procedure.
    pub second: Option<Box<CurveInput>>,
}

fn healthy() -> FaultClass {
    FaultClass::Healthy
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrectionProcedure {
    M1,
    M2,
    #[serde(alias = "M2new")]
    M2New,
    M3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectSection {
    pub procedure: CorrectionProcedure,
    /// Target condition of M1, M2 and M2New.
    pub target: Option<EnvSpec>,
    /// Interpolation weight of M3.
    #[serde(default)]
    pub gamma: f64,
    pub curves: Vec<CurveInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub blocking_diodes: bool,
    pub strategy: StrategyKind,
    pub architecture: Architecture,
    pub channels: ChannelMode,
    pub samples_per_class: usize,
    pub seed: u64,
    /// `timestamp,g_wm2,t_celsius` records; a synthetic year seeded by
    /// `seed` is used when absent.
    pub env_csv_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Points per simulated curve.
    pub n_points: usize,
    /// Records below this irradiance (W/m2) are skipped.
    pub g_floor: f64,
    pub split: SplitFractions,
    pub train: TrainSection,
    pub grid: GridSection,
    pub correction_factors: Option<CorrectionFactors>,
    pub correct: Option<CorrectSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: Scenario::Case2NoSoiling,
            blocking_diodes: true,
            strategy: StrategyKind::IscVoc,
            architecture: Architecture::CbamCnn,
            channels: ChannelMode::IvPv,
            samples_per_class: 200,
            seed: 0,
            env_csv_path: None,
            output_dir: PathBuf::from("out"),
            n_points: 200,
            g_floor: DEFAULT_G_FLOOR,
            split: SplitFractions::default(),
            train: TrainSection::default(),
            grid: GridSection::default(),
            correction_factors: None,
            correct: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; a relative `env_csv_path` is taken relative to the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(env), Some(dir)) = (&cfg.env_csv_path, path.parent()) {
            if env.is_relative() {
                cfg.env_csv_path = Some(dir.join(env));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn n_classes(&self) -> usize {
        self.scenario.classes().len()
    }

    pub fn array(&self) -> ArrayConfig {
        ArrayConfig::with_blocking_diodes(self.blocking_diodes)
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.to_train_config(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let f = &self.split;
        if !(f.test_fraction > 0.0 && f.test_fraction < 1.0)
            || !(f.val_fraction_of_train > 0.0 && f.val_fraction_of_train < 1.0)
        {
            return bad("split fractions must lie in (0, 1)".into());
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class must be >= 1".into());
        }
        if self.n_points < 2 {
            return bad("n_points must be >= 2".into());
        }
        if !(self.g_floor >= 0.0) {
            return bad("g_floor must be >= 0".into());
        }
        if let Some(f) = &self.correction_factors {
            f.validate()?;
        }
        self.train_config().validate()
    }
}
