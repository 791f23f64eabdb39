//! Safeguarded Newton iteration for scalar monotone equations.
//!
//! Every implicit equation in the simulator (module current for a voltage,
//! module voltage for a current, string current for a terminal voltage) is
//! monotone in the unknown, so a bracketing Newton/bisection hybrid always
//! terminates: Newton steps are taken while they stay inside the current
//! bracket and shrink fast enough, otherwise the bracket is halved.

use crate::error::{Error, Result};

/// Stopping rule for [`newton_bisect`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    /// Accept `x` once `|f(x)| <= f_abs`.
    pub f_abs: f64,
    /// Accept once the bracket is narrower than `x_rel * max(|a|, |b|, 1)`.
    pub x_rel: f64,
    pub max_iter: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { f_abs: 1e-12, x_rel: 1e-15, max_iter: 200 }
    }
}

/// Find a root of `f` inside `[lo, hi]`.
///
/// `f` returns the residual and its derivative. The endpoints must bracket a
/// sign change (an endpoint with an exactly zero residual is returned as is).
/// `guess` seeds the first Newton step; the bracket midpoint is used otherwise.
pub fn newton_bisect<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    guess: Option<f64>,
    tol: &Tolerance,
    context: &'static str,
) -> Result<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (f_lo, _) = f(lo);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    let (f_hi, _) = f(hi);
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || (f_lo > 0.0) == (f_hi > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "root not bracketed in [{lo}, {hi}] ({context}): f = {f_lo}, {f_hi}"
        )));
    }
    // Orient so that f(neg) < 0 < f(pos).
    let (mut neg, mut pos) = if f_lo < 0.0 { (lo, hi) } else { (hi, lo) };

    let mut x = match guess {
        Some(g) if g > lo.min(hi) && g < lo.max(hi) => g,
        _ => 0.5 * (lo + hi),
    };
    let mut dx_old = (hi - lo).abs();
    let mut dx = dx_old;

    for _ in 0..tol.max_iter {
        let (fx, dfx) = f(x);
        if fx.is_nan() {
            return Err(Error::ConvergenceFailure { iterations: 0, context });
        }
        if fx.abs() <= tol.f_abs {
            return Ok(x);
        }
        if fx < 0.0 {
            neg = x;
        } else {
            pos = x;
        }

        let (a, b) = (neg.min(pos), neg.max(pos));
        if b - a <= tol.x_rel * a.abs().max(b.abs()).max(1.0) {
            return Ok(x);
        }

        let newton = x - fx / dfx;
        let in_bracket = newton.is_finite() && newton > a && newton < b;
        if in_bracket && (2.0 * fx).abs() <= (dx_old * dfx).abs() {
            dx_old = dx;
            dx = newton - x;
            x = newton;
        } else {
            dx_old = dx;
            dx = 0.5 * (b - a);
            x = a + dx;
        }
    }
    Err(Error::ConvergenceFailure { iterations: tol.max_iter, context })
}

/// Bisection for the boundary of a predicate that is `true` on `[lo, x*)` and
/// `false` on `[x*, hi]`. Returns the smallest `x` (to within `x_abs`) for
/// which the predicate is false; for a non-increasing function this is the
/// leftmost point where it drops to zero or below, even across flat regions.
pub fn bisect_boundary<P>(mut pred: P, mut lo: f64, mut hi: f64, x_abs: f64, max_iter: usize) -> f64
where
    P: FnMut(f64) -> bool,
{
    for _ in 0..max_iter {
        if hi - lo <= x_abs {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
