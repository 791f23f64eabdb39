//! Gramian angular difference field.

use crate::error::{Error, Result};

/// Tolerance for inputs marginally outside `[0, 1]`; such values are clamped.
pub const RANGE_TOL: f64 = 1e-12;

/// GADF of a series scaled to `[0, 1]`, row-major `n x n`.
///
/// With `x = cos(phi)` and `s = sin(phi) = sqrt(1 - x^2)` (the angles lie in
/// `[0, pi/2]`), `M[i][j] = sin(phi_i - phi_j) = s_i x_j - x_i s_j`. The
/// diagonal is exactly zero and `M[j][i]` is the exact negation of `M[i][j]`.
pub fn gadf(series: &[f64]) -> Result<Vec<f64>> {
    let n = series.len();
    let mut x = Vec::with_capacity(n);
    for (index, &value) in series.iter().enumerate() {
        if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&value) {
            return Err(Error::OutOfRangeInput { index, value });
        }
        x.push(value.clamp(0.0, 1.0));
    }
    let s: Vec<f64> = x.iter().map(|v| (1.0 - v * v).sqrt()).collect();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (s[i] * x[j] - x[i] * s[j]).clamp(-1.0, 1.0);
            m[i * n + j] = d;
            m[j * n + i] = -d;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent route: angles through arccos, then the sine of differences.
    fn gadf_trig(x: &[f64]) -> Vec<f64> {
        let phi: Vec<f64> = x.iter().map(|v| v.acos()).collect();
        let n = x.len();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = (phi[i] - phi[j]).sin();
            }
        }
        m
    }

    #[test]
    fn zero_series_gives_zero_matrix() {
        assert!(gadf(&[0.0; 50]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_point_example() {
        let m = gadf(&[0.0, 1.0]).unwrap();
        let t = gadf_trig(&[0.0, 1.0]);
        let expected = [0.0, 1.0, -1.0, 0.0];
        for k in 0..4 {
            assert!((m[k] - expected[k]).abs() < 1e-12);
            assert!((m[k] - t[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(gadf(&[0.2, 1.1]), Err(Error::OutOfRangeInput { index: 1, .. })));
        assert!(matches!(gadf(&[-0.01]), Err(Error::OutOfRangeInput { index: 0, .. })));
        assert!(gadf(&[1.0 + 1e-13, -1e-13]).is_ok());
    }

    #[test]
    fn matches_trig_route_on_random_series() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
            let (a, b) = (gadf(&x).unwrap(), gadf_trig(&x));
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn range_diagonal_antisymmetry(x in proptest::collection::vec(0.0f64..=1.0, 1..60)) {
            let n = x.len();
            let m = gadf(&x).unwrap();
            for i in 0..n {
                prop_assert_eq!(m[i * n + i], 0.0);
                for j in 0..n {
                    prop_assert!(m[i * n + j].abs() <= 1.0);
                    prop_assert_eq!(m[i * n + j], -m[j * n + i]);
                }
            }
        }
    }
}
