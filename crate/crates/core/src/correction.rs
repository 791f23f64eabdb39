//! IEC 60891 I-V curve translation procedures.
//!
//! Temperature differences are unit-agnostic (K or °C); the absolute
//! temperature in the M2new reference term is taken in °C.

use serde::{Deserialize, Serialize};

use crate::curve::IVCurve;
use crate::error::{Error, Result};
use crate::model::EnvCondition;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectionFactors {
    /// Absolute current temperature coefficient (A/°C).
    pub alpha: f64,
    /// Absolute voltage temperature coefficient (V/°C).
    pub beta: f64,
    /// Relative current temperature coefficient (1/°C).
    pub alpha_rel: f64,
    /// Relative voltage temperature coefficient (1/°C).
    pub beta_rel: f64,
    /// Curve correction factor (ohm/°C).
    pub kappa: f64,
    /// Internal series resistance (ohm).
    pub r_s_corr: f64,
    /// Irradiance correction factor.
    pub a_irr: f64,
}

impl Default for CorrectionFactors {
    /// Zero coefficients with the default array's series resistance
    /// (three 0.41 ohm modules per string, two strings).
    fn default() -> Self {
        CorrectionFactors {
            alpha: 0.0,
            beta: 0.0,
            alpha_rel: 0.0,
            beta_rel: 0.0,
            kappa: 0.0,
            r_s_corr: 0.41 * 3.0 / 2.0,
            a_irr: 0.0,
        }
    }
}

impl CorrectionFactors {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_s_corr >= 0.0) {
            return Err(Error::InvalidParameter(format!("r_s_corr must be >= 0, got {}", self.r_s_corr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Procedure {
    M1,
    M2,
    M2New,
}

impl std::str::FromStr for Procedure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(Procedure::M1),
            "m2" => Ok(Procedure::M2),
            "m2new" => Ok(Procedure::M2New),
            _ => Err(Error::InvalidParameter(format!("unknown correction procedure `{s}`"))),
        }
    }
}

fn check(from: &EnvCondition, f: &CorrectionFactors) -> Result<()> {
    if from.g == 0.0 {
        return Err(Error::ZeroIrradiance);
    }
    from.validate()?;
    f.validate()
}

/// Rebuild a curve from mapped points; the voltage order is restored if the
/// map reordered them and exact duplicates are dropped.
fn assemble(v: Vec<f64>, i: Vec<f64>, env: EnvCondition) -> Result<IVCurve> {
    if v.windows(2).all(|w| w[1] > w[0]) {
        return IVCurve::new(v, i, env);
    }
    let mut pts: Vec<(f64, f64)> = v.into_iter().zip(i).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    let (v, i) = pts.into_iter().unzip();
    IVCurve::new(v, i, env)
}

/// First procedure: additive current shift, voltage shift through `Rs`, `kappa`, `beta`.
pub fn correct_m1(curve: &IVCurve, from: &EnvCondition, to: &EnvCondition, f: &CorrectionFactors) -> Result<IVCurve> {
    check(from, f)?;
    let isc = curve.isc();
    let dt = to.t - from.t;
    let (mut v2, mut i2) = (Vec::with_capacity(curve.len()), Vec::with_capacity(curve.len()));
    for (&v1, &i1) in curve.v.iter().zip(&curve.i) {
        let i = i1 + isc * (to.g / from.g - 1.0) + f.alpha * dt;
        v2.push(v1 - f.r_s_corr * (i - i1) - f.kappa * i * dt + f.beta * dt);
        i2.push(i);
    }
    assemble(v2, i2, *to)
}

fn m2(curve: &IVCurve, from: &EnvCondition, to: &EnvCondition, f: &CorrectionFactors, voc_ref: f64) -> Result<IVCurve> {
    let dt = to.t - from.t;
    let ratio = to.g / from.g;
    let (mut v2, mut i2) = (Vec::with_capacity(curve.len()), Vec::with_capacity(curve.len()));
    for (&v1, &i1) in curve.v.iter().zip(&curve.i) {
        let i = i1 * (1.0 + f.alpha_rel * dt) * ratio;
        v2.push(v1 + voc_ref * (f.beta_rel * dt + f.a_irr * ratio.ln()) - f.r_s_corr * (i - i1) - f.kappa * i * dt);
        i2.push(i);
    }
    assemble(v2, i2, *to)
}

/// Second procedure: multiplicative current map, voltage scaled by Voc.
pub fn correct_m2(curve: &IVCurve, from: &EnvCondition, to: &EnvCondition, f: &CorrectionFactors) -> Result<IVCurve> {
    check(from, f)?;
    let voc = curve.voc().ok_or(Error::NoVocCrossing)?;
    m2(curve, from, to, f, voc)
}

/// Second procedure with Voc referred to 25 °C.
pub fn correct_m2new(
    curve: &IVCurve,
    from: &EnvCondition,
    to: &EnvCondition,
    f: &CorrectionFactors,
) -> Result<IVCurve> {
    check(from, f)?;
    let voc = curve.voc().ok_or(Error::NoVocCrossing)?;
    m2(curve, from, to, f, voc * (1.0 + f.beta_rel * (25.0 - from.t_celsius())))
}

pub fn correct(
    procedure: Procedure,
    curve: &IVCurve,
    from: &EnvCondition,
    to: &EnvCondition,
    f: &CorrectionFactors,
) -> Result<IVCurve> {
    match procedure {
        Procedure::M1 => correct_m1(curve, from, to, f),
        Procedure::M2 => correct_m2(curve, from, to, f),
        Procedure::M2New => correct_m2new(curve, from, to, f),
    }
}

/// Third procedure: point-by-point interpolation between two curves sampled
/// on a common index grid, with the matching interpolated condition.
pub fn correct_m3(curve1: &IVCurve, curve2: &IVCurve, gamma: f64) -> Result<(IVCurve, EnvCondition)> {
    if curve1.len() != curve2.len() {
        return Err(Error::LengthMismatch { left: curve1.len(), right: curve2.len() });
    }
    if !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must be finite, got {gamma}")));
    }
    let lerp = |a: f64, b: f64| a + gamma * (b - a);
    let v = curve1.v.iter().zip(&curve2.v).map(|(&a, &b)| lerp(a, b)).collect();
    let i = curve1.i.iter().zip(&curve2.i).map(|(&a, &b)| lerp(a, b)).collect();
    let env = EnvCondition::new(lerp(curve1.env.g, curve2.env.g), lerp(curve1.env.t, curve2.env.t));
    Ok((assemble(v, i, env)?, env))
}
