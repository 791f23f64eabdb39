//! Environmental record series and dataset-scale curve simulation.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{array_iv_curve, ArrayConfig};
use crate::curve::IVCurve;
use crate::error::{Error, Result};
use crate::fault::{sample_fault, FaultClass, FaultSpec};
use crate::model::EnvCondition;

/// Records below this irradiance (W/m2) are not used for simulation.
pub const DEFAULT_G_FLOOR: f64 = 100.0;

pub const ENV_CSV_HEADER: [&str; 3] = ["timestamp", "g_wm2", "t_celsius"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvRecord {
    pub timestamp: String,
    pub env: EnvCondition,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvSeries {
    pub records: Vec<EnvRecord>,
}

impl EnvSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Indices of records with irradiance at or above `g_floor`.
    pub fn usable_indices(&self, g_floor: f64) -> Vec<usize> {
        (0..self.records.len()).filter(|&k| self.records[k].env.g >= g_floor).collect()
    }

    /// Parse `timestamp,g_wm2,t_celsius` CSV; temperatures become Kelvin.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::MalformedRecord { line: 1, reason: e.to_string() })?.clone();
        if header.iter().collect::<Vec<_>>() != ENV_CSV_HEADER {
            return Err(Error::MalformedRecord {
                line: 1,
                reason: format!("expected header `{}`", ENV_CSV_HEADER.join(",")),
            });
        }
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| Error::MalformedRecord {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |reason: String| Error::MalformedRecord { line, reason };
            if row.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", row.len())));
            }
            let num = |k: usize, name: &str| {
                row[k]
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| bad(format!("{name} `{}` is not a number", &row[k])))
            };
            let env = EnvCondition::from_celsius(num(1, "g_wm2")?, num(2, "t_celsius")?);
            env.validate().map_err(|e| bad(e.to_string()))?;
            records.push(EnvRecord { timestamp: row[0].to_string(), env });
        }
        Ok(EnvSeries { records })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(ENV_CSV_HEADER).map_err(|e| csv_io(path, e))?;
        for r in &self.records {
            w.write_record([r.timestamp.clone(), format!("{:.3}", r.env.g), format!("{:.3}", r.env.t_celsius())])
                .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Hourly stand-in for a year of outdoor records: clear-sky irradiance
    /// with seasonal day length, random cloud attenuation, and module
    /// temperature from a seasonal ambient plus irradiance heating.
    pub fn synthetic_year(seed: u64) -> Self {
        const DAYS_IN_MONTH: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut records = Vec::with_capacity(365 * 24);
        let (mut month, mut day) = (0usize, 1u32);
        for doy in 0..365 {
            let season = (2.0 * std::f64::consts::PI * (doy as f64 - 80.0) / 365.0).sin();
            let half_day = 6.0 + 1.8 * season;
            let peak = 950.0 + 120.0 * season;
            let t_amb_mean = 14.0 + 11.0 * season;
            let cloud_day: f64 = rng.random_range(0.35..1.0);
            for hour in 0..24 {
                let solar = (hour as f64 + 0.5) - 12.0;
                let elev = (std::f64::consts::FRAC_PI_2 * solar / half_day).cos();
                let clear = if solar.abs() < half_day { peak * elev.max(0.0).powf(1.2) } else { 0.0 };
                let cloud = (cloud_day + rng.random_range(-0.15..0.15)).clamp(0.05, 1.0);
                let g = (clear * cloud).min(1400.0);
                let t_amb = t_amb_mean + 5.0 * (std::f64::consts::PI * (hour as f64 - 9.0) / 12.0).sin();
                let t_mod = t_amb + g * 25.0 / 800.0 + rng.random_range(-1.0..1.0);
                records.push(EnvRecord {
                    timestamp: format!("2021-{:02}-{:02}T{:02}:00", month + 1, day, hour),
                    env: EnvCondition::from_celsius(g, t_mod),
                });
            }
            day += 1;
            if day > DAYS_IN_MONTH[month] {
                day = 1;
                month += 1;
            }
        }
        EnvSeries { records }
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-sample seed: `splitmix64(splitmix64(base ^ splitmix64(a)) ^ b)`.
pub fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(a)) ^ b)
}

/// One simulated, labelled sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCurve {
    pub curve: IVCurve,
    pub class: FaultClass,
    pub fault: FaultSpec,
    pub env_index: usize,
    pub seed: u64,
}

/// Simulate `samples_per_class` curves for every class in `classes`.
///
/// Sample `k` of class `c` uses seed `mix_seed(rng_seed, c.id(), k)` for its
/// fault parameters and `mix_seed(that, 1, 0)` to pick a usable env record,
/// so output is identical for any thread count. Output is class-major.
pub fn drive_series(
    cfg: &ArrayConfig,
    classes: &[FaultClass],
    env_series: &EnvSeries,
    samples_per_class: usize,
    rng_seed: u64,
    g_floor: f64,
    n_points: usize,
) -> Result<Vec<LabeledCurve>> {
    let usable = env_series.usable_indices(g_floor);
    if usable.is_empty() {
        return Err(Error::EmptyEnvSeries { floor: g_floor });
    }
    let jobs: Vec<(FaultClass, usize)> =
        classes.iter().flat_map(|&c| (0..samples_per_class).map(move |k| (c, k))).collect();
    jobs.into_par_iter()
        .map(|(class, k)| {
            let seed = mix_seed(rng_seed, class.id() as u64, k as u64);
            let mut pick = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1, 0));
            let env_index = usable[pick.random_range(0..usable.len())];
            let env = env_series.records[env_index].env;
            let fault = sample_fault(class, cfg, seed);
            let curve = array_iv_curve(cfg, &fault, &env, n_points)?;
            Ok(LabeledCurve { curve, class, fault, env_index, seed })
        })
        .collect()
}
