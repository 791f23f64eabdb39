//! Curve-to-image feature extraction.
//!
//! A measured curve is completed with zero current up to a reference voltage,
//! resampled onto a uniform grid, scaled to `[0, 1]` per axis and turned into
//! two GADF channels (current and power over the voltage index).

mod gadf;
mod image;

pub use gadf::{gadf, RANGE_TOL};
pub use image::{channel_to_gray, write_channel_png};

use serde::{Deserialize, Serialize};

use crate::array::ArrayConfig;
use crate::curve::{interp, linspace, IVCurve};
use crate::error::{Error, Result};
use crate::model::{open_circuit_voltage, photocurrent, EnvCondition};

pub const FEATURE_SIZE: usize = 50;
pub const FEATURE_CHANNELS: usize = 2;
/// Relative overshoot of a fixed limit that is clamped instead of rejected.
pub const LIMIT_OVERSHOOT_TOL: f64 = 0.005;
/// Relative shortfall of the completion voltage below the measured Voc that
/// is tolerated.
pub const IDEAL_BELOW_MEASURED_TOL: f64 = 0.01;

/// Current and voltage limits; the power limit is their product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub isc: f64,
    pub voc: f64,
}

impl Limits {
    pub fn of(&self, axis: Axis) -> f64 {
        match axis {
            Axis::V => self.voc,
            Axis::I => self.isc,
            Axis::P => self.isc * self.voc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    V,
    I,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormalizationStrategy {
    /// Per-curve min-max scaling over the measured voltage range.
    Normal,
    /// Fixed dataset-wide limits.
    Global(Limits),
    /// Ideal limits of the curve's own environmental condition.
    IscVoc,
}

/// Strategy tag without data, as used in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    Normal,
    Global,
    IscVoc,
}

impl NormalizationStrategy {
    pub fn kind(&self) -> StrategyKind {
        match self {
            NormalizationStrategy::Normal => StrategyKind::Normal,
            NormalizationStrategy::Global(_) => StrategyKind::Global,
            NormalizationStrategy::IscVoc => StrategyKind::IscVoc,
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StrategyKind::Normal => "Normal",
            StrategyKind::Global => "Global",
            StrategyKind::IscVoc => "IscVoc",
        })
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "normal" => Ok(StrategyKind::Normal),
            "global" => Ok(StrategyKind::Global),
            "iscvoc" => Ok(StrategyKind::IscVoc),
            _ => Err(Error::InvalidParameter(format!("unknown normalization strategy `{s}`"))),
        }
    }
}

/// Ideal array short-circuit current and open-circuit voltage at `env`.
pub fn ideal_limits(cfg: &ArrayConfig, env: &EnvCondition) -> Result<Limits> {
    env.validate()?;
    let iph = photocurrent(&cfg.module, env);
    if !(iph > 0.0) {
        return Err(Error::NonPositivePhotocurrent { iph });
    }
    Ok(Limits {
        isc: cfg.n_parallel_strings as f64 * iph,
        voc: cfg.n_series_modules as f64 * open_circuit_voltage(&cfg.module, env)?,
    })
}

/// Curve on a uniform voltage grid, with power `v * i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub v: Vec<f64>,
    pub i: Vec<f64>,
    pub p: Vec<f64>,
}

/// First zero-current crossing, or the last sampled voltage when there is none.
pub fn measured_voc(curve: &IVCurve) -> f64 {
    curve.voc().unwrap_or(curve.v[curve.len() - 1])
}

/// Resample onto `n_out` uniform voltages over `[0, v_end]`. The current is
/// zero from the first zero crossing on and beyond the last sample.
pub fn resample_onto(curve: &IVCurve, v_end: f64, n_out: usize) -> Resampled {
    let v = linspace(0.0, v_end, n_out);
    if curve.is_dark() {
        return Resampled { p: vec![0.0; n_out], i: vec![0.0; n_out], v };
    }
    let cut = curve.voc();
    let last = curve.v[curve.len() - 1];
    let i: Vec<f64> = v
        .iter()
        .map(|&x| if x > last || cut.is_some_and(|c| x >= c) { 0.0 } else { interp(&curve.v, &curve.i, x, false) })
        .collect();
    let p = v.iter().zip(&i).map(|(a, b)| a * b).collect();
    Resampled { v, i, p }
}

/// Zero-complete the curve up to `voc_ideal` and resample onto `n_out`
/// uniform voltages over `[0, voc_ideal]`.
pub fn complete_and_resample(curve: &IVCurve, voc_ideal: f64, n_out: usize) -> Result<Resampled> {
    if curve.is_empty() || n_out < 2 {
        return Err(Error::InvalidParameter("need a non-empty curve and at least 2 output points".into()));
    }
    if !(voc_ideal > 0.0) {
        return Err(Error::InvalidParameter(format!("completion voltage must be positive, got {voc_ideal}")));
    }
    let measured = measured_voc(curve);
    if voc_ideal < measured * (1.0 - IDEAL_BELOW_MEASURED_TOL) {
        return Err(Error::IdealBelowMeasured { ideal: voc_ideal, measured });
    }
    let mut r = resample_onto(curve, voc_ideal, n_out);
    // The ideal Voc bounds the measured one; a positive tail here is solver noise.
    r.i[n_out - 1] = 0.0;
    r.p[n_out - 1] = 0.0;
    Ok(r)
}

fn min_max(values: &[f64]) -> Result<Vec<f64>> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::DegenerateRange { value: lo });
    }
    Ok(values.iter().map(|x| ((x - lo) / (hi - lo)).clamp(0.0, 1.0)).collect())
}

/// Scale by a fixed limit. Overshoot within tolerance (or any overshoot when
/// `clamp_all`) is clamped into `[0, 1]`.
fn by_limit(values: &[f64], limit: f64, clamp_all: bool) -> Result<Vec<f64>> {
    if !(limit > 0.0 && limit.is_finite()) {
        return Err(Error::InvalidParameter(format!("normalization limit must be positive, got {limit}")));
    }
    values
        .iter()
        .enumerate()
        .map(|(index, &x)| {
            let y = x / limit;
            if !y.is_finite() {
                return Err(Error::OutOfRangeInput { index, value: x });
            }
            if !clamp_all && y > 1.0 + LIMIT_OVERSHOOT_TOL {
                return Err(Error::LimitExceeded { value: x, limit });
            }
            if !clamp_all && y < -LIMIT_OVERSHOOT_TOL {
                return Err(Error::OutOfRangeInput { index, value: x });
            }
            Ok(y.clamp(0.0, 1.0))
        })
        .collect()
}

/// Scale one axis to `[0, 1]`. `ideal` supplies the per-condition limits used
/// by [`NormalizationStrategy::IscVoc`]; the other strategies ignore it.
///
/// Global limits come from a training split, so other curves may overshoot
/// them; those values saturate at 1.
pub fn normalize_axis(
    values: &[f64],
    strategy: &NormalizationStrategy,
    axis: Axis,
    ideal: &Limits,
) -> Result<Vec<f64>> {
    match strategy {
        NormalizationStrategy::Normal => min_max(values),
        NormalizationStrategy::Global(limits) => by_limit(values, limits.of(axis), true),
        NormalizationStrategy::IscVoc => by_limit(values, ideal.of(axis), false),
    }
}

/// `size x size x channels` tensor stored height-major, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub size: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FeatureTensor {
    pub fn zeros(size: usize, channels: usize) -> Self {
        FeatureTensor { size, channels, data: vec![0.0; size * size * channels] }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.size, self.size, self.channels)
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.size + col) * self.channels + ch]
    }

    /// Row-major matrix of one channel.
    pub fn channel(&self, ch: usize) -> Vec<f32> {
        self.data.iter().skip(ch).step_by(self.channels).copied().collect()
    }

    fn set_channel(&mut self, ch: usize, m: &[f64]) {
        for (k, v) in m.iter().enumerate() {
            self.data[k * self.channels + ch] = *v as f32;
        }
    }

    /// Frobenius norm over all channels.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &FeatureTensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureOptions {
    pub size: usize,
    /// Map constant series under `Normal` to 0.5 instead of failing.
    pub degenerate_to_midpoint: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions { size: FEATURE_SIZE, degenerate_to_midpoint: false }
    }
}

/// Two-channel GADF image (current, power) of `curve` at its own condition.
pub fn stacked_feature(curve: &IVCurve, cfg: &ArrayConfig, strategy: &NormalizationStrategy) -> Result<FeatureTensor> {
    stacked_feature_with(curve, cfg, strategy, &FeatureOptions::default())
}

pub fn stacked_feature_with(
    curve: &IVCurve,
    cfg: &ArrayConfig,
    strategy: &NormalizationStrategy,
    opts: &FeatureOptions,
) -> Result<FeatureTensor> {
    let ideal = ideal_limits(cfg, &curve.env)?;
    let r = match strategy {
        NormalizationStrategy::Normal => {
            let voc = measured_voc(curve);
            if !(voc > 0.0) {
                return Err(Error::DegenerateRange { value: voc });
            }
            resample_onto(curve, voc, opts.size)
        }
        NormalizationStrategy::Global(limits) => resample_onto(curve, limits.voc, opts.size),
        NormalizationStrategy::IscVoc => complete_and_resample(curve, ideal.voc, opts.size)?,
    };
    let mut out = FeatureTensor::zeros(opts.size, FEATURE_CHANNELS);
    for (ch, (values, axis)) in [(&r.i, Axis::I), (&r.p, Axis::P)].into_iter().enumerate() {
        let scaled = match normalize_axis(values, strategy, axis, &ideal) {
            Err(Error::DegenerateRange { .. }) if opts.degenerate_to_midpoint => vec![0.5; values.len()],
            other => other?,
        };
        out.set_channel(ch, &gadf(&scaled)?);
    }
    Ok(out)
}

/// Baseline matrix with rows `[G, T, V, I]`, one per curve point.
pub fn gtiv_matrix(curve: &IVCurve) -> Vec<[f64; 4]> {
    curve.v.iter().zip(&curve.i).map(|(&v, &i)| [curve.env.g, curve.env.t, v, i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::array_iv_curve;
    use crate::fault::{FaultClass, FaultSpec};

    fn healthy(env: EnvCondition) -> IVCurve {
        array_iv_curve(&ArrayConfig::default(), &FaultSpec::healthy(), &env, 200).unwrap()
    }

    #[test]
    fn ideal_limits_at_stc_and_half_sun() {
        let cfg = ArrayConfig::default();
        let l = ideal_limits(&cfg, &EnvCondition::stc()).unwrap();
        assert!((l.isc - 9.4).abs() < 1e-12);
        assert!((l.voc - 64.2).abs() < 1e-8);
        let h = ideal_limits(&cfg, &EnvCondition::new(500.0, 298.0)).unwrap();
        assert!((h.isc - 4.7).abs() < 1e-12);
        assert!(matches!(
            ideal_limits(&cfg, &EnvCondition::new(0.0, 298.0)),
            Err(Error::NonPositivePhotocurrent { .. })
        ));
    }

    #[test]
    fn completion_ends_at_ideal_voc() {
        let c = healthy(EnvCondition::stc());
        let r = complete_and_resample(&c, 64.2, 50).unwrap();
        assert_eq!(r.v.len(), 50);
        assert_eq!(*r.v.last().unwrap(), 64.2);
        assert_eq!(*r.i.last().unwrap(), 0.0);
        let too_low = complete_and_resample(&c, 60.0, 50);
        assert!(matches!(too_low, Err(Error::IdealBelowMeasured { .. })));
    }

    #[test]
    fn resampling_on_target_grid_is_identity() {
        let v = linspace(0.0, 10.0, 50);
        let i: Vec<f64> = v.iter().map(|x| 3.0 - 0.3 * x).collect();
        let c = IVCurve::new(v.clone(), i.clone(), EnvCondition::stc()).unwrap();
        let r = complete_and_resample(&c, 10.0, 50).unwrap();
        assert_eq!(r.v, v);
        assert_eq!(&r.i[..49], &i[..49]);
        let once = IVCurve::new(r.v.clone(), r.i.clone(), EnvCondition::stc()).unwrap();
        assert_eq!(complete_and_resample(&once, 10.0, 50).unwrap(), r);
    }

    #[test]
    fn resampling_is_idempotent_on_simulated_curve() {
        let c = healthy(EnvCondition::new(640.0, 315.0));
        let voc = ideal_limits(&ArrayConfig::default(), &c.env).unwrap().voc;
        let r = complete_and_resample(&c, voc, 50).unwrap();
        let again = complete_and_resample(&IVCurve::new(r.v.clone(), r.i.clone(), c.env).unwrap(), voc, 50).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn resampling_preserves_energy() {
        let trapz = |x: &[f64], y: &[f64]| {
            x.windows(2).zip(y.windows(2)).map(|(a, b)| (a[1] - a[0]) * (b[0] + b[1]) / 2.0).sum::<f64>()
        };
        for g in [300.0, 700.0, 1000.0] {
            let c = healthy(EnvCondition::new(g, 300.0));
            let voc = ideal_limits(&ArrayConfig::default(), &c.env).unwrap().voc;
            let r = complete_and_resample(&c, voc, 50).unwrap();
            let (a, b) = (trapz(&c.v, &c.i), trapz(&r.v, &r.i));
            assert!((a - b).abs() / a < 0.02, "{a} vs {b}");
        }
    }

    #[test]
    fn normalization_examples() {
        let none = Limits { isc: 1.0, voc: 1.0 };
        assert_eq!(
            normalize_axis(&[0.0, 2.0, 4.0], &NormalizationStrategy::Normal, Axis::I, &none).unwrap(),
            vec![0.0, 0.5, 1.0]
        );
        let ideal = Limits { isc: 9.4, voc: 64.2 };
        assert_eq!(
            normalize_axis(&[0.0, 4.7], &NormalizationStrategy::IscVoc, Axis::I, &ideal).unwrap(),
            vec![0.0, 0.5]
        );
        let global = NormalizationStrategy::Global(ideal);
        for axis in [Axis::V, Axis::I, Axis::P] {
            let vals = [0.0, 1.0, 5.0, 9.0];
            assert_eq!(
                normalize_axis(&vals, &global, axis, &none).unwrap(),
                normalize_axis(&vals, &NormalizationStrategy::IscVoc, axis, &ideal).unwrap()
            );
        }
        assert!(matches!(
            normalize_axis(&[3.0, 3.0], &NormalizationStrategy::Normal, Axis::I, &none),
            Err(Error::DegenerateRange { .. })
        ));
        assert!(matches!(
            normalize_axis(&[9.5], &NormalizationStrategy::IscVoc, Axis::I, &ideal),
            Err(Error::LimitExceeded { .. })
        ));
        assert_eq!(normalize_axis(&[9.42], &NormalizationStrategy::IscVoc, Axis::I, &ideal).unwrap(), vec![1.0]);
        assert_eq!(normalize_axis(&[20.0], &global, Axis::I, &none).unwrap(), vec![1.0]);
    }

    #[test]
    fn ideal_limits_bound_every_fault() {
        use crate::env::EnvSeries;
        use crate::fault::sample_fault;
        let env = EnvSeries::synthetic_year(3);
        let usable = env.usable_indices(100.0);
        for blocking in [true, false] {
            let cfg = ArrayConfig::with_blocking_diodes(blocking);
            for (n, class) in FaultClass::ALL.iter().enumerate() {
                for k in 0..30 {
                    let e = env.records[usable[(n * 977 + k * 31) % usable.len()]].env;
                    let f = sample_fault(*class, &cfg, (n * 1000 + k) as u64);
                    let c = array_iv_curve(&cfg, &f, &e, 200).unwrap();
                    let l = ideal_limits(&cfg, &e).unwrap();
                    assert!(c.isc() <= l.isc, "{class}");
                    assert!(c.v[199] <= l.voc * (1.0 + 1e-9), "{class}");
                }
            }
        }
    }

    #[test]
    fn feature_shape_and_structure() {
        let cfg = ArrayConfig::default();
        let c = healthy(EnvCondition::new(820.0, 305.0));
        for strategy in [
            NormalizationStrategy::Normal,
            NormalizationStrategy::IscVoc,
            NormalizationStrategy::Global(Limits { isc: 10.0, voc: 70.0 }),
        ] {
            let t = stacked_feature(&c, &cfg, &strategy).unwrap();
            assert_eq!(t.shape(), (50, 50, 2));
            for ch in 0..2 {
                for i in 0..50 {
                    assert_eq!(t.get(i, i, ch), 0.0);
                    for j in 0..50 {
                        assert_eq!(t.get(i, j, ch), -t.get(j, i, ch));
                        assert!(t.get(i, j, ch).abs() <= 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn healthy_and_line_line_are_separable() {
        let cfg = ArrayConfig::with_blocking_diodes(true);
        let env = EnvCondition::new(900.0, 310.0);
        let h = stacked_feature(&healthy(env), &cfg, &NormalizationStrategy::IscVoc).unwrap();
        let ll = array_iv_curve(&cfg, &FaultSpec::structural(FaultClass::LL1), &env, 200).unwrap();
        let l = stacked_feature(&ll, &cfg, &NormalizationStrategy::IscVoc).unwrap();
        assert!(h.distance(&l) > 0.1 * h.norm());
    }

    #[test]
    fn gtiv_columns() {
        let c = healthy(EnvCondition::new(700.0, 301.0));
        let m = gtiv_matrix(&c);
        assert_eq!(m.len(), 200);
        for (k, row) in m.iter().enumerate() {
            assert_eq!(row[0], 700.0);
            assert_eq!(row[1], 301.0);
            assert_eq!((row[2], row[3]), (c.v[k], c.i[k]));
        }
    }

    #[test]
    fn degenerate_curve_midpoint_option() {
        let cfg = ArrayConfig::default();
        let c = IVCurve::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0], EnvCondition::stc()).unwrap();
        let opts = FeatureOptions { degenerate_to_midpoint: true, ..Default::default() };
        // Constant current with no Voc crossing: I is flat, P is not.
        let t = stacked_feature_with(&c, &cfg, &NormalizationStrategy::Normal, &opts).unwrap();
        assert!(t.channel(0).iter().all(|&x| x == 0.0));
        assert!(matches!(
            stacked_feature(&c, &cfg, &NormalizationStrategy::Normal),
            Err(Error::DegenerateRange { .. })
        ));
    }
}
