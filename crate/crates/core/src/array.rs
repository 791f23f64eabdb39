//! Series-parallel array composition with fault injection.
//!
//! Each string is a stack of modules sharing one current; strings share the
//! terminal voltage. A string current for a given voltage is found by Newton
//! iteration on the summed module voltages, which are explicit functions of
//! current through [`ModuleState::voltage_and_slope`].

use serde::{Deserialize, Serialize};

use crate::curve::{linspace, IVCurve};
use crate::error::{Error, Result};
use crate::fault::FaultSpec;
use crate::model::{EnvCondition, ModuleParams, ModuleState};
use crate::solve::{bisect_boundary, newton_bisect, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub n_series_modules: usize,
    pub n_parallel_strings: usize,
    pub blocking_diodes: bool,
    /// Forward drop of each blocking diode (V).
    pub v_blocking_drop: f64,
    pub module: ModuleParams,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            n_series_modules: 3,
            n_parallel_strings: 2,
            blocking_diodes: true,
            v_blocking_drop: 0.0,
            module: ModuleParams::shell_sp70(),
        }
    }
}

impl ArrayConfig {
    pub fn with_blocking_diodes(blocking_diodes: bool) -> Self {
        ArrayConfig { blocking_diodes, ..Default::default() }
    }

    pub fn n_modules(&self) -> usize {
        self.n_series_modules * self.n_parallel_strings
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_series_modules == 0 || self.n_parallel_strings == 0 {
            return Err(Error::InvalidParameter("array needs at least one module per string and one string".into()));
        }
        if !(self.v_blocking_drop >= 0.0) {
            return Err(Error::InvalidParameter(format!("v_blocking_drop must be >= 0, got {}", self.v_blocking_drop)));
        }
        self.module.validate()
    }
}

const STRING_TOL: Tolerance = Tolerance { f_abs: 1e-11, x_rel: 1e-15, max_iter: 300 };

/// Solved series stack of one string at one environmental condition.
#[derive(Debug, Clone)]
struct StringStack {
    modules: Vec<ModuleState>,
    open: bool,
    blocking: bool,
    v_drop: f64,
}

impl StringStack {
    fn new(cfg: &ArrayConfig, fault: &FaultSpec, s: usize, env: &EnvCondition) -> Self {
        let open = fault.open_string_index == Some(s);
        let shorted = if s == 0 { fault.n_shorted } else { 0 };
        let modules = (0..cfg.n_series_modules)
            .map(|m| {
                let g = env.g * fault.irradiance_factor(cfg, s, m);
                ModuleState::new(&cfg.module, &EnvCondition { g, t: env.t })
            })
            .enumerate()
            // Shorted modules sit at the end of the string so that shading and
            // shorting never coincide on one module.
            .filter(|(m, _)| *m < cfg.n_series_modules - shorted)
            .map(|(_, st)| st)
            .collect();
        StringStack { modules, open, blocking: cfg.blocking_diodes, v_drop: cfg.v_blocking_drop }
    }

    /// `(sum of module voltages, derivative)` at string current `i`.
    fn stack_voltage(&self, i: f64) -> Result<(f64, f64)> {
        let mut v = 0.0;
        let mut dv = 0.0;
        for m in &self.modules {
            let (mv, md) = m.voltage_and_slope(i)?;
            v += mv;
            dv += md;
        }
        Ok((v, dv))
    }

    /// String current at terminal voltage `v` and `dI/dv`.
    fn current(&self, v: f64) -> Result<(f64, f64)> {
        if self.open {
            return Ok((0.0, 0.0));
        }
        let drop = if self.blocking { self.v_drop } else { 0.0 };
        let f = |i: f64| self.stack_voltage(i).map(|(sv, d)| (sv - drop - v, d));
        let (f0, _) = f(0.0)?;
        if f0 == 0.0 {
            return Ok((0.0, 0.0));
        }
        let (lo, hi) = if f0 > 0.0 {
            let iph_max = self.modules.iter().map(|m| m.iph).fold(0.0, f64::max);
            (0.0, iph_max + 1.0)
        } else if self.blocking {
            return Ok((0.0, 0.0));
        } else {
            let mut lo = -1.0;
            while f(lo)?.0 <= 0.0 {
                lo *= 4.0;
                if lo < -1e12 {
                    return Err(Error::ConvergenceFailure { iterations: 0, context: "reverse string current bracket" });
                }
            }
            (lo, 0.0)
        };
        if f(hi)?.0 >= 0.0 {
            // Every module bypassed with zero drop and v = 0: the voltage is
            // flat in current, take the smallest current that satisfies it.
            let i = bisect_boundary(|i| f(i).map(|r| r.0 > 0.0).unwrap_or(false), lo, hi, 1e-12, 200);
            return Ok((i, 0.0));
        }
        // Errors inside the closure surface as NaN and abort the solve.
        let mut err = None;
        let g = |i: f64| match f(i) {
            Ok(r) => r,
            Err(e) => {
                err.get_or_insert(e);
                (f64::NAN, f64::NAN)
            }
        };
        let res = newton_bisect(g, lo, hi, None, &STRING_TOL, "string current");
        if let Some(e) = err {
            return Err(e);
        }
        let i = res?;
        let (_, slope) = self.stack_voltage(i)?;
        let di_dv = if slope != 0.0 { 1.0 / slope } else { 0.0 };
        Ok((i, di_dv))
    }
}

/// All strings of an array at one condition, with array-level degradations.
#[derive(Debug, Clone)]
pub struct ArraySolver {
    strings: Vec<StringStack>,
    r_shunt_deg: Option<f64>,
    r_series_deg: Option<f64>,
    voc_upper: f64,
}

impl ArraySolver {
    pub fn new(cfg: &ArrayConfig, fault: &FaultSpec, env: &EnvCondition) -> Result<Self> {
        cfg.validate()?;
        fault.validate(cfg)?;
        env.validate()?;
        let strings = (0..cfg.n_parallel_strings).map(|s| StringStack::new(cfg, fault, s, env)).collect();
        let healthy = ModuleState::new(&cfg.module, env);
        let voc_upper =
            if healthy.iph > 0.0 { cfg.n_series_modules as f64 * healthy.open_circuit_voltage()? } else { 0.0 };
        Ok(ArraySolver { strings, r_shunt_deg: fault.r_shunt_deg, r_series_deg: fault.r_series_deg, voc_upper })
    }

    /// Upper bound of the array open-circuit voltage: all modules healthy.
    pub fn voc_upper(&self) -> f64 {
        self.voc_upper
    }

    pub fn string_current(&self, s: usize, v: f64) -> Result<f64> {
        let st =
            self.strings.get(s).ok_or_else(|| Error::InvalidParameter(format!("string index {s} out of range")))?;
        st.current(v).map(|r| r.0)
    }

    /// Current and `dI/dv` behind the series degradation, i.e. at the voltage
    /// across the paralleled strings.
    fn internal(&self, v: f64) -> Result<(f64, f64)> {
        let mut i = 0.0;
        let mut di = 0.0;
        for st in &self.strings {
            let (si, sd) = st.current(v)?;
            i += si;
            di += sd;
        }
        if let Some(r) = self.r_shunt_deg {
            i -= v / r;
            di -= 1.0 / r;
        }
        Ok((i, di))
    }

    pub fn internal_current(&self, v: f64) -> Result<f64> {
        self.internal(v).map(|r| r.0)
    }

    /// Terminal current at terminal voltage `v` (valid for `0 <= v <= Voc`).
    pub fn terminal_current(&self, v: f64) -> Result<f64> {
        if self.r_series_deg.is_some() {
            self.terminal_current_below(v, self.open_circuit_voltage()?)
        } else {
            self.internal_current(v)
        }
    }

    /// As [`Self::terminal_current`] with the open-circuit voltage known.
    fn terminal_current_below(&self, v: f64, voc: f64) -> Result<f64> {
        let Some(r) = self.r_series_deg.filter(|r| *r > 0.0) else {
            return self.internal_current(v);
        };
        // Internal voltage u satisfies u - r * I(u) = v; the left side is
        // strictly increasing in u.
        let g = |u: f64| match self.internal(u) {
            Ok((i, di)) => (u - r * i - v, 1.0 - r * di),
            Err(_) => (f64::NAN, f64::NAN),
        };
        let i_v = self.internal_current(v)?;
        if i_v <= 0.0 {
            return Ok(i_v);
        }
        let hi = voc.max(v);
        let tol = Tolerance { f_abs: 1e-10, x_rel: 1e-15, max_iter: 300 };
        let u = newton_bisect(g, v, hi, None, &tol, "series degradation")?;
        self.internal_current(u)
    }

    /// Terminal voltage at which the array current first reaches zero.
    /// Series degradation does not move it.
    pub fn open_circuit_voltage(&self) -> Result<f64> {
        if self.voc_upper <= 0.0 || self.internal_current(0.0)? <= 0.0 {
            return Ok(0.0);
        }
        let hi = self.voc_upper * (1.0 + 1e-9) + 1e-9;
        let mut failure = None;
        let voc = bisect_boundary(
            |v| match self.internal_current(v) {
                Ok(i) => i > 0.0,
                Err(e) => {
                    failure.get_or_insert(e);
                    false
                }
            },
            0.0,
            hi,
            1e-11 * hi,
            200,
        );
        match failure {
            Some(e) => Err(e),
            None => Ok(voc),
        }
    }
}

/// Current of string `s` at terminal voltage `v`.
pub fn string_current(cfg: &ArrayConfig, fault: &FaultSpec, s: usize, env: &EnvCondition, v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::InvalidParameter(format!("voltage {v} is not finite")));
    }
    ArraySolver::new(cfg, fault, env)?.string_current(s, v)
}

/// Array I-V curve of `n_points` samples uniformly spaced over `[0, Voc]`.
pub fn array_iv_curve(cfg: &ArrayConfig, fault: &FaultSpec, env: &EnvCondition, n_points: usize) -> Result<IVCurve> {
    if n_points < 2 {
        return Err(Error::InvalidParameter(format!("n_points must be >= 2, got {n_points}")));
    }
    let solver = ArraySolver::new(cfg, fault, env)?;
    let voc = solver.open_circuit_voltage()?;
    if voc <= 0.0 {
        return Ok(IVCurve::dark(*env, n_points));
    }
    let v = linspace(0.0, voc, n_points);
    let i = v.iter().map(|&x| solver.terminal_current_below(x, voc)).collect::<Result<Vec<_>>>()?;
    IVCurve::new(v, i, *env)
}

/// Open-circuit voltage of a string with `n_shorted` modules relative to a
/// healthy one.
pub fn faulty_string_voc_ratio(cfg: &ArrayConfig, n_shorted: usize) -> f64 {
    (cfg.n_series_modules - n_shorted) as f64 / cfg.n_series_modules as f64
}
