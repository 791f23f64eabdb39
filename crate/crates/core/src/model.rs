//! Single-diode PV module model.
//!
//! The module is described by its datasheet constants ([`ModuleParams`]) and
//! driven by an [`EnvCondition`]. The implicit single-diode equation
//!
//! ```text
//! I = Iph - I0 * (exp((V + I*Rs) / (n*Vt)) - 1) - (V + I*Rs) / Rp
//! ```
//!
//! is solved numerically in either direction. `Vt = Ns*k*T/q` is the
//! module-level thermal voltage.
//!
//! The nominal saturation current folds in the shunt leakage at the nominal
//! open-circuit point, so that the full equation (shunt term included) has its
//! `I = 0` root at exactly `voc_n` under nominal conditions. The diode-only
//! closed form `n*Vt*ln(Iph/I0 + 1)` is its `Rp -> inf` limit and is only used
//! as a starting point.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::curve::IVCurve;
use crate::error::{Error, Result};
use crate::solve::{newton_bisect, Tolerance};

pub const BOLTZMANN: f64 = 1.380649e-23;
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;
pub const CELSIUS_OFFSET: f64 = 273.15;

/// Relative residual bound every solved operating point satisfies.
pub const RESIDUAL_REL_TOL: f64 = 1e-9;

const SOLVER_TOL: Tolerance = Tolerance { f_abs: 1e-12, x_rel: 1e-15, max_iter: 200 };

/// Datasheet constants of one PV module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModuleParams {
    /// Short-circuit current at nominal conditions (A).
    pub isc_n: f64,
    /// Open-circuit voltage at nominal conditions (V).
    pub voc_n: f64,
    pub impp_n: f64,
    pub vmpp_n: f64,
    /// Voltage-temperature coefficient (V/degC).
    pub k_v: f64,
    /// Current-temperature coefficient (A/degC).
    pub k_i: f64,
    /// Series-connected cells.
    pub n_s: u32,
    pub r_s: f64,
    pub r_p: f64,
    pub n_ideal: f64,
    /// Band gap (eV).
    pub e_g: f64,
    /// Nominal temperature (K).
    pub t_n: f64,
    /// Nominal irradiance (W/m2).
    pub g_stc: f64,
    /// Forward drop of the module's bypass diode (V).
    pub v_bypass_drop: f64,
}

impl ModuleParams {
    /// Shell SP-70 datasheet values with the unfitted default ideality factor.
    pub fn shell_sp70_unfitted() -> Self {
        ModuleParams {
            isc_n: 4.7,
            voc_n: 21.4,
            impp_n: 4.25,
            vmpp_n: 16.5,
            k_v: -0.076,
            k_i: 0.002,
            n_s: 36,
            r_s: 0.41,
            r_p: 141.0,
            n_ideal: 1.3,
            e_g: 1.12,
            t_n: 298.0,
            g_stc: 1000.0,
            v_bypass_drop: 0.5,
        }
    }

    /// Shell SP-70 with the ideality factor fitted to the datasheet MPP.
    pub fn shell_sp70() -> Self {
        static FITTED: OnceLock<ModuleParams> = OnceLock::new();
        *FITTED.get_or_init(|| {
            fit_ideality(&ModuleParams::shell_sp70_unfitted()).expect("SP-70 datasheet constants are valid")
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("module params: {what}")));
        if !(self.isc_n > self.impp_n && self.impp_n > 0.0) {
            return bad("need isc_n > impp_n > 0");
        }
        if !(self.voc_n > self.vmpp_n && self.vmpp_n > 0.0) {
            return bad("need voc_n > vmpp_n > 0");
        }
        if !(self.r_p > self.r_s && self.r_s > 0.0) {
            return bad("need r_p > r_s > 0");
        }
        if self.n_s == 0 {
            return bad("need n_s >= 1");
        }
        if !(1.0..=2.0).contains(&self.n_ideal) {
            return bad("need 1 <= n_ideal <= 2");
        }
        if !(self.v_bypass_drop >= 0.0) || !(self.t_n > 0.0) || !(self.g_stc > 0.0) || !(self.e_g > 0.0) {
            return bad("need v_bypass_drop >= 0 and positive t_n, g_stc, e_g");
        }
        if self.isc_n <= self.voc_n / self.r_p {
            return bad("shunt leakage at voc_n exceeds isc_n");
        }
        Ok(())
    }

    /// Module thermal voltage `Ns*k*T/q`.
    pub fn thermal_voltage(&self, t: f64) -> f64 {
        self.n_s as f64 * BOLTZMANN * t / ELEMENTARY_CHARGE
    }

    /// Saturation current at the nominal temperature.
    pub fn nominal_saturation_current(&self) -> f64 {
        let a_n = self.n_ideal * self.thermal_voltage(self.t_n);
        (self.isc_n - self.voc_n / self.r_p) / (self.voc_n / a_n).exp_m1()
    }
}

/// Irradiance and module temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvCondition {
    /// Irradiance (W/m2).
    pub g: f64,
    /// Temperature (K).
    pub t: f64,
}

impl EnvCondition {
    pub const fn new(g: f64, t: f64) -> Self {
        EnvCondition { g, t }
    }

    pub fn from_celsius(g: f64, t_celsius: f64) -> Self {
        EnvCondition { g, t: t_celsius + CELSIUS_OFFSET }
    }

    /// 1000 W/m2 at the 298 K nominal temperature.
    pub const fn stc() -> Self {
        EnvCondition { g: 1000.0, t: 298.0 }
    }

    pub fn t_celsius(&self) -> f64 {
        self.t - CELSIUS_OFFSET
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1500.0).contains(&self.g) {
            return Err(Error::InvalidParameter(format!("irradiance {} outside [0, 1500] W/m2", self.g)));
        }
        if !(200.0..=360.0).contains(&self.t) {
            return Err(Error::InvalidParameter(format!("temperature {} outside [200, 360] K", self.t)));
        }
        Ok(())
    }
}

/// Photocurrent `[isc_n + k_i*(T - t_n)] * G / g_stc`.
pub fn photocurrent(p: &ModuleParams, env: &EnvCondition) -> f64 {
    (p.isc_n + p.k_i * (env.t - p.t_n)) * env.g / p.g_stc
}

/// Diode saturation current at temperature `t`.
pub fn saturation_current(p: &ModuleParams, t: f64) -> f64 {
    let cube = (p.t_n / t).powi(3);
    let activation = ELEMENTARY_CHARGE * p.e_g / (p.n_ideal * BOLTZMANN) * (1.0 / p.t_n - 1.0 / t);
    p.nominal_saturation_current() * cube * activation.exp()
}

/// Per-condition constants of the single-diode equation, computed once and
/// reused by the array solver.
#[derive(Debug, Clone, Copy)]
pub struct ModuleState {
    pub iph: f64,
    pub i0: f64,
    /// `n * Vt(T)`.
    pub a: f64,
    pub r_s: f64,
    pub r_p: f64,
    pub v_bypass_drop: f64,
}

impl ModuleState {
    pub fn new(p: &ModuleParams, env: &EnvCondition) -> Self {
        ModuleState {
            iph: photocurrent(p, env),
            i0: saturation_current(p, env.t),
            a: p.n_ideal * p.thermal_voltage(env.t),
            r_s: p.r_s,
            r_p: p.r_p,
            v_bypass_drop: p.v_bypass_drop,
        }
    }

    /// Residual of the implicit equation at `(v, i)`; zero on the curve.
    pub fn residual(&self, v: f64, i: f64) -> f64 {
        let x = v + i * self.r_s;
        self.iph - self.i0 * (x / self.a).exp_m1() - x / self.r_p - i
    }

    fn residual_scale(&self, i: f64) -> f64 {
        self.iph.abs().max(i.abs()).max(1.0)
    }

    /// Junction voltage `x = V + I*Rs` at which diode plus shunt carry `c`.
    fn junction_voltage(&self, c: f64) -> Result<f64> {
        if c == 0.0 {
            return Ok(0.0);
        }
        let h = |x: f64| {
            let e = (x / self.a).exp();
            (self.i0 * (e - 1.0) + x / self.r_p - c, self.i0 / self.a * e + 1.0 / self.r_p)
        };
        let (lo, hi, guess) = if c > 0.0 {
            let diode_only = self.a * (c / self.i0).ln_1p();
            let hi = diode_only.min(c * self.r_p);
            // One fixed-point step from the diode-only solution lands just below the root.
            let guess = self.a * ((c - hi / self.r_p).max(0.0) / self.i0).ln_1p();
            (0.0, hi, Some(guess))
        } else {
            // Reverse bias: the diode saturates at -I0, the root sits just
            // above (c + I0) * Rp, too close to bracket in floating point.
            (c * self.r_p, 0.0, Some((c + self.i0) * self.r_p))
        };
        let tol = Tolerance { f_abs: SOLVER_TOL.f_abs * self.residual_scale(c), ..SOLVER_TOL };
        newton_bisect(h, lo, hi, guess, &tol, "junction voltage")
    }

    /// Terminal voltage at current `i`, clamped by the bypass diode, together
    /// with `dV/dI` (zero while the bypass diode conducts).
    pub fn voltage_and_slope(&self, i: f64) -> Result<(f64, f64)> {
        let x = self.junction_voltage(self.iph - i)?;
        let v = x - i * self.r_s;
        if v < -self.v_bypass_drop {
            return Ok((-self.v_bypass_drop, 0.0));
        }
        let dh = self.i0 / self.a * (x / self.a).exp() + 1.0 / self.r_p;
        Ok((v, -1.0 / dh - self.r_s))
    }

    pub fn voltage(&self, i: f64) -> Result<f64> {
        self.voltage_and_slope(i).map(|(v, _)| v)
    }

    /// Current at terminal voltage `v` (no bypass conduction).
    pub fn current(&self, v: f64) -> Result<f64> {
        let f = |i: f64| {
            let x = v + i * self.r_s;
            let e = (x / self.a).exp();
            (
                self.iph - self.i0 * (e - 1.0) - x / self.r_p - i,
                -self.r_s * (self.i0 / self.a * e + 1.0 / self.r_p) - 1.0,
            )
        };
        let hi = self.iph.max(0.0) + self.i0 + (-v).max(0.0) / self.r_p + 1.0;
        let lo = (-v / self.r_s).min(0.0) - 1.0;
        let guess = self.iph - self.i0 * (v / self.a).exp_m1() - v / self.r_p;
        let tol = Tolerance { f_abs: SOLVER_TOL.f_abs * self.iph.abs().max(1.0), ..SOLVER_TOL };
        newton_bisect(f, lo, hi, Some(guess), &tol, "module current")
    }

    /// Open-circuit voltage: root of the implicit equation at `I = 0`.
    pub fn open_circuit_voltage(&self) -> Result<f64> {
        if !(self.iph > 0.0) {
            return Err(Error::NonPositivePhotocurrent { iph: self.iph });
        }
        self.junction_voltage(self.iph)
    }
}

/// Open-circuit voltage of one module.
pub fn open_circuit_voltage(p: &ModuleParams, env: &EnvCondition) -> Result<f64> {
    ModuleState::new(p, env).open_circuit_voltage()
}

/// Module current at terminal voltage `v`.
pub fn module_current(p: &ModuleParams, env: &EnvCondition, v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::InvalidParameter(format!("voltage {v} is not finite")));
    }
    ModuleState::new(p, env).current(v)
}

/// Module voltage carrying current `i`; bypass diode clamps it at `-v_bypass_drop`.
pub fn module_voltage(p: &ModuleParams, env: &EnvCondition, i: f64) -> Result<f64> {
    if !i.is_finite() {
        return Err(Error::InvalidParameter(format!("current {i} is not finite")));
    }
    ModuleState::new(p, env).voltage(i)
}

/// I-V curve sampled at `n_points` uniformly spaced voltages over `[0, Voc]`.
///
/// A dark module (no photocurrent) yields the all-zero curve.
pub fn module_iv_curve(p: &ModuleParams, env: &EnvCondition, n_points: usize) -> Result<IVCurve> {
    if n_points < 2 {
        return Err(Error::InvalidParameter("n_points must be >= 2".into()));
    }
    let state = ModuleState::new(p, env);
    if !(state.iph > 0.0) {
        return Ok(IVCurve::dark(*env, n_points));
    }
    let voc = state.open_circuit_voltage()?;
    let v = crate::curve::linspace(0.0, voc, n_points);
    let i = v.iter().map(|&v| state.current(v)).collect::<Result<Vec<_>>>()?;
    IVCurve::new(v, i, *env)
}

/// Maximum power point `(v, i)` of one module found by golden-section search.
pub fn module_mpp(p: &ModuleParams, env: &EnvCondition) -> Result<(f64, f64)> {
    let state = ModuleState::new(p, env);
    let voc = state.open_circuit_voltage()?;
    let power = |v: f64| state.current(v).map(|i| v * i);
    let v = golden_max(power, 0.0, voc, 1e-9)?;
    Ok((v, state.current(v)?))
}

/// Refine the ideality factor so the nominal-condition MPP matches the
/// datasheet `(impp_n, vmpp_n)`; one-dimensional search over `[1, 2]`.
pub fn fit_ideality(p: &ModuleParams) -> Result<ModuleParams> {
    p.validate()?;
    let env = EnvCondition::new(p.g_stc, p.t_n);
    let mismatch = |n: f64| -> Result<f64> {
        let trial = ModuleParams { n_ideal: n, ..*p };
        let (v, i) = module_mpp(&trial, &env)?;
        let dv = v / p.vmpp_n - 1.0;
        let di = i / p.impp_n - 1.0;
        Ok(-(dv * dv + di * di))
    };
    let n = golden_max(mismatch, 1.0, 2.0, 1e-7)?;
    Ok(ModuleParams { n_ideal: n, ..*p })
}

fn golden_max<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sp70() -> ModuleParams {
        ModuleParams::shell_sp70()
    }

    #[test]
    fn photocurrent_examples() {
        let p = ModuleParams::shell_sp70_unfitted();
        assert_eq!(photocurrent(&p, &EnvCondition::new(1000.0, 298.0)), 4.7);
        assert!((photocurrent(&p, &EnvCondition::new(500.0, 298.0)) - 2.35).abs() < 1e-15);
        // 4.7 + 0.002 * 10
        assert!((photocurrent(&p, &EnvCondition::new(1000.0, 308.0)) - 4.72).abs() < 1e-12);
    }

    #[test]
    fn photocurrent_linear_in_irradiance() {
        let p = sp70();
        for t in [260.0, 298.0, 330.0] {
            let base = photocurrent(&p, &EnvCondition::new(100.0, t));
            for k in 1..=12 {
                let g = 100.0 * k as f64;
                assert!((photocurrent(&p, &EnvCondition::new(g, t)) - base * k as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn saturation_current_at_nominal_temperature() {
        let p = ModuleParams::shell_sp70_unfitted();
        assert_eq!(saturation_current(&p, 298.0), p.nominal_saturation_current());
        // Hand evaluation with n = 1.3: Vt,n = 36*k*298/q = 0.924475 V,
        // (4.7 - 21.4/141) / (exp(21.4/(1.3*0.924475)) - 1) = 8.4057e-8 A.
        let i0 = p.nominal_saturation_current();
        assert!((i0 - 8.4057e-8).abs() / 8.4057e-8 < 1e-3, "{i0}");
        assert!((i0 - 8.8e-8).abs() / 8.8e-8 < 0.05);
    }

    #[test]
    fn saturation_current_increases_with_temperature() {
        let p = sp70();
        let mut prev = 0.0;
        for k in 0..50 {
            let i0 = saturation_current(&p, 220.0 + 2.8 * k as f64);
            assert!(i0 > prev);
            prev = i0;
        }
    }

    #[test]
    fn nominal_voc_round_trip() {
        for p in [ModuleParams::shell_sp70_unfitted(), sp70()] {
            let voc = open_circuit_voltage(&p, &EnvCondition::stc()).unwrap();
            assert!((voc - 21.4).abs() < 1e-9, "{voc}");
        }
    }

    #[test]
    fn voc_decreases_with_irradiance_loss() {
        let p = sp70();
        let voc = open_circuit_voltage(&p, &EnvCondition::new(500.0, 298.0)).unwrap();
        assert!(voc < 21.4);
    }

    #[test]
    fn voc_matches_bisection_of_residual() {
        let p = sp70();
        let env = EnvCondition::new(1000.0, 318.0);
        let state = ModuleState::new(&p, &env);
        // Plain bisection on the residual at I = 0, independent of the Newton path.
        let (mut lo, mut hi) = (0.0_f64, 40.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if state.residual(mid, 0.0) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let voc = open_circuit_voltage(&p, &env).unwrap();
        assert!((voc - lo).abs() < 1e-9, "{voc} vs {lo}");
        assert!(voc < 21.4);
    }

    #[test]
    fn dark_module_has_no_voc() {
        let p = sp70();
        let err = open_circuit_voltage(&p, &EnvCondition::new(0.0, 298.0));
        assert!(matches!(err, Err(Error::NonPositivePhotocurrent { .. })));
    }

    #[test]
    fn current_at_voc_is_zero() {
        let p = sp70();
        for env in [EnvCondition::stc(), EnvCondition::new(300.0, 280.0), EnvCondition::new(1200.0, 340.0)] {
            let voc = open_circuit_voltage(&p, &env).unwrap();
            assert!(module_current(&p, &env, voc).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn short_circuit_and_mpp_match_datasheet() {
        let p = sp70();
        let isc = module_current(&p, &EnvCondition::stc(), 0.0).unwrap();
        assert!((isc - 4.7).abs() / 4.7 < 0.01, "{isc}");
        let i = module_current(&p, &EnvCondition::stc(), 16.5).unwrap();
        assert!((i - 4.25).abs() / 4.25 < 0.05, "{i}");
        let (vm, im) = module_mpp(&p, &EnvCondition::stc()).unwrap();
        assert!((vm - 16.5).abs() / 16.5 < 0.05 && (im - 4.25).abs() / 4.25 < 0.05);
    }

    #[test]
    fn fitted_ideality_in_range() {
        let n = sp70().n_ideal;
        assert!((1.0..=2.0).contains(&n), "{n}");
    }

    #[test]
    fn voltage_inverse_examples() {
        let p = sp70();
        let env = EnvCondition::stc();
        let v0 = module_voltage(&p, &env, 0.0).unwrap();
        assert!((v0 - open_circuit_voltage(&p, &env).unwrap()).abs() < 1e-9);
        assert_eq!(module_voltage(&p, &env, 6.0).unwrap(), -p.v_bypass_drop);
        for i in [0.5, 2.0, 4.0] {
            let v = module_voltage(&p, &env, i).unwrap();
            let back = module_current(&p, &env, v).unwrap();
            assert!((back - i).abs() < 1e-6, "{i} -> {v} -> {back}");
        }
    }

    #[test]
    fn dark_curve_is_all_zero() {
        let c = module_iv_curve(&sp70(), &EnvCondition::new(0.0, 298.0), 20).unwrap();
        assert!(c.v.iter().chain(c.i.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn stc_curve_endpoints() {
        let c = module_iv_curve(&sp70(), &EnvCondition::stc(), 200).unwrap();
        assert_eq!(c.len(), 200);
        assert_eq!(c.v[0], 0.0);
        assert!((c.i[0] - 4.7).abs() < 0.047);
        assert!((c.v[199] - 21.4).abs() < 1e-9);
        assert!(c.i[199].abs() < 1e-6);
    }

    #[test]
    fn healthy_power_has_single_interior_peak() {
        let c = module_iv_curve(&sp70(), &EnvCondition::new(700.0, 310.0), 200).unwrap();
        let p = c.power();
        let k = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(k > 0 && k < 199);
        assert!(p[..=k].windows(2).all(|w| w[1] >= w[0]));
        assert!(p[k..].windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = sp70();
        p.r_s = 200.0;
        assert!(p.validate().is_err());
        let mut p = sp70();
        p.n_ideal = 2.5;
        assert!(p.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn curve_current_non_increasing(g in 50.0f64..1400.0, t in 250.0f64..350.0) {
            let c = module_iv_curve(&sp70(), &EnvCondition::new(g, t), 100).unwrap();
            for w in c.i.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
        }

        #[test]
        fn solver_residual_bounded(g in 50.0f64..1400.0, t in 250.0f64..350.0, frac in 0.0f64..1.2) {
            let p = sp70();
            let env = EnvCondition::new(g, t);
            let state = ModuleState::new(&p, &env);
            let voc = state.open_circuit_voltage().unwrap();
            let v = frac * voc;
            let i = state.current(v).unwrap();
            prop_assert!(state.residual(v, i).abs() < RESIDUAL_REL_TOL * state.iph.max(1.0));
        }

        #[test]
        fn voltage_current_round_trip(g in 50.0f64..1400.0, t in 250.0f64..350.0, frac in 0.0f64..0.97) {
            let p = sp70();
            let env = EnvCondition::new(g, t);
            let state = ModuleState::new(&p, &env);
            let isc = state.current(0.0).unwrap();
            let i = frac * isc;
            let v = state.voltage(i).unwrap();
            prop_assert!(state.residual(v, i).abs() < RESIDUAL_REL_TOL * state.iph.max(1.0));
            prop_assert!((state.current(v).unwrap() - i).abs() < 1e-6);
        }
    }
}
