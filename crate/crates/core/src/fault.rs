//! Fault classes and randomized fault parameters.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::ArrayConfig;
use crate::error::{Error, Result};

/// The 14 fault states. The first 9 form the soiling-free scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultClass {
    Healthy,
    LL1,
    LL2,
    OC,
    Shade1,
    Shade2,
    SDegradation,
    ADegradation,
    Soiling,
    #[serde(rename = "Soiling_LL1")]
    SoilingLL1,
    #[serde(rename = "Soiling_LL2")]
    SoilingLL2,
    #[serde(rename = "Soiling_OC")]
    SoilingOC,
    #[serde(rename = "Soiling_SDegradation")]
    SoilingSDegradation,
    #[serde(rename = "Soiling_ADegradation")]
    SoilingADegradation,
}

pub const SHADING_LOSS_RANGE: (f64, f64) = (0.2, 1.0);
pub const SOILING_LOSS_RANGE: (f64, f64) = (0.0, 0.1);
pub const SERIES_DEGRADATION_RANGE: (f64, f64) = (1.0, 15.0);
pub const SHUNT_DEGRADATION_RANGE: (f64, f64) = (20.0, 200.0);

impl FaultClass {
    pub const ALL: [FaultClass; 14] = [
        FaultClass::Healthy,
        FaultClass::LL1,
        FaultClass::LL2,
        FaultClass::OC,
        FaultClass::Shade1,
        FaultClass::Shade2,
        FaultClass::SDegradation,
        FaultClass::ADegradation,
        FaultClass::Soiling,
        FaultClass::SoilingLL1,
        FaultClass::SoilingLL2,
        FaultClass::SoilingOC,
        FaultClass::SoilingSDegradation,
        FaultClass::SoilingADegradation,
    ];

    /// Classes of the scenario without soiling-compound faults.
    pub fn without_soiling() -> &'static [FaultClass] {
        &Self::ALL[..9]
    }

    pub fn id(self) -> u16 {
        self as u16
    }

    pub fn from_id(id: u16) -> Option<FaultClass> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FaultClass::Healthy => "Healthy",
            FaultClass::LL1 => "LL1",
            FaultClass::LL2 => "LL2",
            FaultClass::OC => "OC",
            FaultClass::Shade1 => "Shade1",
            FaultClass::Shade2 => "Shade2",
            FaultClass::SDegradation => "SDegradation",
            FaultClass::ADegradation => "ADegradation",
            FaultClass::Soiling => "Soiling",
            FaultClass::SoilingLL1 => "Soiling_LL1",
            FaultClass::SoilingLL2 => "Soiling_LL2",
            FaultClass::SoilingOC => "Soiling_OC",
            FaultClass::SoilingSDegradation => "Soiling_SDegradation",
            FaultClass::SoilingADegradation => "Soiling_ADegradation",
        }
    }

    pub fn has_soiling(self) -> bool {
        matches!(
            self,
            FaultClass::Soiling
                | FaultClass::SoilingLL1
                | FaultClass::SoilingLL2
                | FaultClass::SoilingOC
                | FaultClass::SoilingSDegradation
                | FaultClass::SoilingADegradation
        )
    }

    pub fn shorted_modules(self) -> usize {
        match self {
            FaultClass::LL1 | FaultClass::SoilingLL1 => 1,
            FaultClass::LL2 | FaultClass::SoilingLL2 => 2,
            _ => 0,
        }
    }

    pub fn shaded_modules(self) -> usize {
        match self {
            FaultClass::Shade1 => 1,
            FaultClass::Shade2 => 2,
            _ => 0,
        }
    }

    pub fn opens_string(self) -> bool {
        matches!(self, FaultClass::OC | FaultClass::SoilingOC)
    }

    pub fn series_degraded(self) -> bool {
        matches!(self, FaultClass::SDegradation | FaultClass::SoilingSDegradation)
    }

    pub fn shunt_degraded(self) -> bool {
        matches!(self, FaultClass::ADegradation | FaultClass::SoilingADegradation)
    }
}

impl fmt::Display for FaultClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaultClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FaultClass::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown fault class `{s}`")))
    }
}

/// Concrete fault parameters for one simulated sample.
///
/// Faulted strings and modules are always the lowest-indexed ones: the array
/// output is invariant under string and module permutations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub class: FaultClass,
    /// Irradiance loss of each shaded module (string 0, modules 0..len).
    pub shading_loss: Vec<f64>,
    /// Irradiance loss of every module, string-major; empty when not soiled.
    pub soiling_loss: Vec<f64>,
    /// Modules short-circuited in string 0.
    pub n_shorted: usize,
    pub open_string_index: Option<usize>,
    /// Extra series resistance at the array terminals (ohm).
    pub r_series_deg: Option<f64>,
    /// Extra shunt resistance across the array (ohm).
    pub r_shunt_deg: Option<f64>,
    pub rng_seed: u64,
}

impl FaultSpec {
    pub fn healthy() -> Self {
        FaultSpec {
            class: FaultClass::Healthy,
            shading_loss: Vec::new(),
            soiling_loss: Vec::new(),
            n_shorted: 0,
            open_string_index: None,
            r_series_deg: None,
            r_shunt_deg: None,
            rng_seed: 0,
        }
    }

    /// Fault of `class` with no random severity: deterministic faults get
    /// their structural parameters, severities stay unset.
    pub fn structural(class: FaultClass) -> Self {
        FaultSpec {
            class,
            n_shorted: class.shorted_modules(),
            open_string_index: class.opens_string().then_some(0),
            ..FaultSpec::healthy()
        }
    }

    /// Irradiance multiplier of module `m` in string `s`.
    pub fn irradiance_factor(&self, cfg: &ArrayConfig, s: usize, m: usize) -> f64 {
        let mut factor = 1.0;
        if s == 0 {
            if let Some(loss) = self.shading_loss.get(m) {
                factor *= 1.0 - loss;
            }
        }
        if let Some(loss) = self.soiling_loss.get(s * cfg.n_series_modules + m) {
            factor *= 1.0 - loss;
        }
        factor
    }

    pub fn validate(&self, cfg: &ArrayConfig) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(format!("fault spec: {m}")));
        if self.n_shorted >= cfg.n_series_modules {
            return bad(format!("n_shorted {} >= modules per string", self.n_shorted));
        }
        if self.shading_loss.len() > cfg.n_series_modules {
            return bad("more shaded modules than modules per string".into());
        }
        if !self.soiling_loss.is_empty() && self.soiling_loss.len() != cfg.n_modules() {
            return bad("soiling vector length must equal module count".into());
        }
        if self.shading_loss.iter().chain(&self.soiling_loss).any(|l| !(0.0..=1.0).contains(l)) {
            return bad("irradiance losses must lie in [0, 1]".into());
        }
        if matches!(self.open_string_index, Some(k) if k >= cfg.n_parallel_strings) {
            return bad("open string index out of range".into());
        }
        if self.r_series_deg.is_some_and(|r| !(r >= 0.0)) || self.r_shunt_deg.is_some_and(|r| !(r > 0.0)) {
            return bad("degradation resistances must be positive".into());
        }
        Ok(())
    }
}

/// Draw a fault of `class` with severities uniform over their full ranges.
///
/// Draw order is fixed (shading, soiling, series, shunt) and only the
/// parameters relevant to the class consume random numbers.
pub fn sample_fault(class: FaultClass, cfg: &ArrayConfig, rng_seed: u64) -> FaultSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut spec = FaultSpec { rng_seed, ..FaultSpec::structural(class) };
    let (lo, hi) = SHADING_LOSS_RANGE;
    spec.shading_loss = (0..class.shaded_modules()).map(|_| rng.random_range(lo..=hi)).collect();
    if class.has_soiling() {
        let (lo, hi) = SOILING_LOSS_RANGE;
        spec.soiling_loss = (0..cfg.n_modules()).map(|_| rng.random_range(lo..=hi)).collect();
    }
    if class.series_degraded() {
        let (lo, hi) = SERIES_DEGRADATION_RANGE;
        spec.r_series_deg = Some(rng.random_range(lo..=hi));
    }
    if class.shunt_degraded() {
        let (lo, hi) = SHUNT_DEGRADATION_RANGE;
        spec.r_shunt_deg = Some(rng.random_range(lo..=hi));
    }
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn healthy_has_no_parameters() {
        let cfg = ArrayConfig::default();
        for seed in 0..20 {
            let f = sample_fault(FaultClass::Healthy, &cfg, seed);
            assert_eq!(FaultSpec { rng_seed: 0, ..f }, FaultSpec::healthy());
        }
    }

    #[test]
    fn shade1_ranges_over_many_seeds() {
        let cfg = ArrayConfig::default();
        assert_eq!(sample_fault(FaultClass::Shade1, &cfg, 7).shading_loss.len(), 1);
        for seed in 0..10_000 {
            let f = sample_fault(FaultClass::Shade1, &cfg, seed);
            assert_eq!(f.shading_loss.len(), 1);
            assert!((0.2..=1.0).contains(&f.shading_loss[0]));
            assert!(f.soiling_loss.is_empty() && f.r_series_deg.is_none() && f.r_shunt_deg.is_none());
        }
    }

    #[test]
    fn compound_soiling_draws_both_parts() {
        let cfg = ArrayConfig::default();
        let f = sample_fault(FaultClass::SoilingLL2, &cfg, 3);
        assert_eq!(f.n_shorted, 2);
        assert_eq!(f.soiling_loss.len(), 6);
        for seed in 0..2000 {
            let f = sample_fault(FaultClass::SoilingLL2, &cfg, seed);
            assert!(f.soiling_loss.iter().all(|l| (0.0..=0.1).contains(l)));
        }
        let f = sample_fault(FaultClass::SoilingSDegradation, &cfg, 11);
        assert!(f.r_series_deg.is_some_and(|r| (1.0..=15.0).contains(&r)));
        let f = sample_fault(FaultClass::SoilingADegradation, &cfg, 11);
        assert!(f.r_shunt_deg.is_some_and(|r| (20.0..=200.0).contains(&r)));
    }

    #[test]
    fn irrelevant_fields_absent() {
        let cfg = ArrayConfig::default();
        for class in FaultClass::ALL {
            for seed in 0..50 {
                let f = sample_fault(class, &cfg, seed);
                f.validate(&cfg).unwrap();
                assert_eq!(f.soiling_loss.is_empty(), !class.has_soiling());
                assert_eq!(f.shading_loss.len(), class.shaded_modules());
                assert_eq!(f.open_string_index.is_some(), class.opens_string());
                assert_eq!(f.r_series_deg.is_some(), class.series_degraded());
                assert_eq!(f.r_shunt_deg.is_some(), class.shunt_degraded());
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = ArrayConfig::default();
        for class in FaultClass::ALL {
            assert_eq!(sample_fault(class, &cfg, 99), sample_fault(class, &cfg, 99));
        }
    }

    #[test]
    fn names_and_ids_round_trip() {
        for (k, c) in FaultClass::ALL.iter().enumerate() {
            assert_eq!(c.id() as usize, k);
            assert_eq!(FaultClass::from_id(c.id()), Some(*c));
            assert_eq!(c.name().parse::<FaultClass>().unwrap(), *c);
            let json = serde_json::to_string(c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.name()));
        }
        assert_eq!(FaultClass::without_soiling().len(), 9);
        assert_eq!(FaultClass::without_soiling()[8], FaultClass::Soiling);
    }
}
