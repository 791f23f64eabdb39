//! Curve translation runs with a deviation report against direct simulation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::array::{array_iv_curve, ArrayConfig};
use crate::correction::{correct, correct_m3, CorrectionFactors, Procedure};
use crate::curve::{interp, IVCurve};
use crate::error::{Error, Result};
use crate::fault::FaultSpec;
use crate::model::EnvCondition;
use crate::pipeline::config::{CorrectionProcedure, CurveInput, RunConfig};

pub const REPORT_FILE: &str = "correction_report.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRow {
    pub index: usize,
    pub input: PathBuf,
    pub output: PathBuf,
    pub from: EnvCondition,
    pub to: EnvCondition,
    /// RMS current difference to the directly simulated curve (A).
    pub rms_current: f64,
    /// `rms_current` over the simulated curve's short-circuit current.
    pub rms_relative: f64,
}

/// RMS current difference of `curve` to `reference`, over the voltages of
/// `curve` that lie within the reference's sampled range.
pub fn rms_deviation(curve: &IVCurve, reference: &IVCurve) -> f64 {
    let hi = reference.v[reference.len() - 1];
    let diffs: Vec<f64> = curve
        .v
        .iter()
        .zip(&curve.i)
        .filter(|(&v, _)| v >= reference.v[0] && v <= hi)
        .map(|(&v, &i)| i - interp(&reference.v, &reference.i, v, false))
        .collect();
    if diffs.is_empty() {
        return f64::NAN;
    }
    (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt()
}

fn simulate(array: &ArrayConfig, input: &CurveInput, env: &EnvCondition, n_points: usize) -> Result<IVCurve> {
    array_iv_curve(array, &FaultSpec::structural(input.class), env, n_points)
}

/// Reads the input curve, or simulates and writes it under `inputs/`.
fn obtain(
    array: &ArrayConfig,
    input: &CurveInput,
    n_points: usize,
    dir: &Path,
    name: &str,
) -> Result<(IVCurve, PathBuf)> {
    let env = EnvCondition::from_celsius(input.g, input.t_celsius);
    match &input.path {
        Some(p) => Ok((IVCurve::read_csv(p, env)?, p.clone())),
        None => {
            let curve = simulate(array, input, &env, n_points)?;
            let path = dir.join("inputs").join(name);
            curve.write_csv(&path)?;
            Ok((curve, path))
        }
    }
}

/// Applies the configured procedure to every listed curve and writes the
/// corrected curves under `corrected/` plus a CSV report.
pub fn correct_cmd(cfg: &RunConfig) -> Result<Vec<CorrectionRow>> {
    let section = cfg.correct.as_ref().ok_or_else(|| Error::Config("missing [correct] section".into()))?;
    let factors = cfg.correction_factors.unwrap_or_default();
    let array = cfg.array();
    let dir = &cfg.output_dir;
    for sub in ["inputs", "corrected"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut rows = Vec::new();
    for (index, input) in section.curves.iter().enumerate() {
        let (curve, in_path) = obtain(&array, input, cfg.n_points, dir, &format!("{index:03}_a.csv"))?;
        let (out, to) = match section.procedure {
            CorrectionProcedure::M3 => {
                let second = input
                    .second
                    .as_deref()
                    .ok_or_else(|| Error::Config(format!("curve {index}: M3 needs `second`")))?;
                let (c2, _) = obtain(&array, second, cfg.n_points, dir, &format!("{index:03}_b.csv"))?;
                correct_m3(&curve, &c2, section.gamma)?
            }
            p => {
                let target = section.target.ok_or_else(|| Error::Config("M1/M2/M2New need `target`".into()))?.env();
                (correct(procedure(p), &curve, &curve.env, &target, &factors)?, target)
            }
        };
        let reference = simulate(&array, input, &to, cfg.n_points)?;
        let rms_current = rms_deviation(&out, &reference);
        let out_path = dir.join("corrected").join(format!("{index:03}.csv"));
        out.write_csv(&out_path)?;
        rows.push(CorrectionRow {
            index,
            input: in_path,
            output: out_path,
            from: curve.env,
            to,
            rms_current,
            rms_relative: rms_current / reference.isc(),
        });
    }
    write_report(&dir.join(REPORT_FILE), &rows)?;
    Ok(rows)
}

fn procedure(p: CorrectionProcedure) -> Procedure {
    match p {
        CorrectionProcedure::M1 => Procedure::M1,
        CorrectionProcedure::M2 => Procedure::M2,
        CorrectionProcedure::M2New => Procedure::M2New,
        CorrectionProcedure::M3 => unreachable!("M3 interpolates, it has no single-curve procedure"),
    }
}

fn write_report(path: &Path, rows: &[CorrectionRow]) -> Result<()> {
    let mut out = String::from("index,input,output,from_g,from_t_k,to_g,to_t_k,rms_current_a,rms_relative\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.index,
            r.input.display(),
            r.output.display(),
            r.from.g,
            r.from.t,
            r.to.g,
            r.to.t,
            r.rms_current,
            r.rms_relative
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Factors matching the simulated array's datasheet coefficients.
pub fn array_factors(array: &ArrayConfig) -> CorrectionFactors {
    let m = &array.module;
    let (ns, np) = (array.n_series_modules as f64, array.n_parallel_strings as f64);
    CorrectionFactors {
        alpha: m.k_i * np,
        beta: m.k_v * ns,
        alpha_rel: m.k_i / m.isc_n,
        beta_rel: m.k_v / m.voc_n,
        r_s_corr: m.r_s * ns / np,
        ..CorrectionFactors::default()
    }
}
