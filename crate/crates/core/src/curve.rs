use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EnvCondition;

/// Sampled I-V characteristic: ascending voltages from 0, one current per voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IVCurve {
    pub v: Vec<f64>,
    pub i: Vec<f64>,
    pub env: EnvCondition,
}

pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (end - start) / (n - 1) as f64;
            let mut out: Vec<f64> = (0..n).map(|k| start + step * k as f64).collect();
            out[n - 1] = end;
            out
        }
    }
}

impl IVCurve {
    /// Builds a curve after checking lengths, finiteness and voltage ordering.
    pub fn new(v: Vec<f64>, i: Vec<f64>, env: EnvCondition) -> Result<Self> {
        if v.len() != i.len() {
            return Err(Error::LengthMismatch { left: v.len(), right: i.len() });
        }
        if v.is_empty() {
            return Err(Error::InvalidParameter("empty curve".into()));
        }
        if v.iter().chain(i.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("curve contains non-finite values".into()));
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("curve voltages must be strictly increasing".into()));
        }
        Ok(IVCurve { v, i, env })
    }

    /// Degenerate all-zero curve for a dark (G = 0) condition.
    pub fn dark(env: EnvCondition, n_points: usize) -> Self {
        IVCurve { v: vec![0.0; n_points], i: vec![0.0; n_points], env }
    }

    pub fn is_dark(&self) -> bool {
        self.v.iter().all(|&v| v == 0.0)
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn power(&self) -> Vec<f64> {
        self.v.iter().zip(&self.i).map(|(v, i)| v * i).collect()
    }

    /// Current at voltage `x` by linear interpolation; ends are extrapolated
    /// from the outermost segment.
    pub fn current_at(&self, x: f64) -> f64 {
        interp(&self.v, &self.i, x, true)
    }

    /// Current at `V = 0`.
    pub fn isc(&self) -> f64 {
        if self.v[0] == 0.0 {
            self.i[0]
        } else {
            self.current_at(0.0)
        }
    }

    /// Voltage of the first zero-current crossing, linearly interpolated.
    pub fn voc(&self) -> Option<f64> {
        if self.i[0] <= 0.0 {
            return Some(self.v[0]);
        }
        let k = self.i.iter().position(|&i| i <= 0.0)?;
        let (v0, v1, i0, i1) = (self.v[k - 1], self.v[k], self.i[k - 1], self.i[k]);
        Some(v0 + (v1 - v0) * i0 / (i0 - i1))
    }

    /// `(v, i, p)` of the sampled maximum-power point.
    pub fn mpp(&self) -> (f64, f64, f64) {
        let (k, p) = self.power().into_iter().enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).expect("non-empty curve");
        (self.v[k], self.i[k], p)
    }

    /// Two-column CSV `v_volts,i_amps`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        let mut out = String::from("v_volts,i_amps\n");
        for (v, i) in self.v.iter().zip(&self.i) {
            out.push_str(&format!("{v:e},{i:e}\n"));
        }
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, env: EnvCondition) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let (mut v, mut i) = (Vec::new(), Vec::new());
        for (n, line) in std::io::BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Format { path: path.into(), reason: format!("line {}: expected `v,i`", n + 1) };
            let (a, b) = line.split_once(',').ok_or_else(bad)?;
            v.push(a.trim().parse::<f64>().map_err(|_| bad())?);
            i.push(b.trim().parse::<f64>().map_err(|_| bad())?);
        }
        IVCurve::new(v, i, env)
    }
}

/// Piecewise-linear interpolation of `(xs, ys)` at `x`; `xs` ascending.
/// Exact at the nodes. Outside the range the end segments are extrapolated
/// when `extrapolate` is set, otherwise the end values are held.
pub fn interp(xs: &[f64], ys: &[f64], x: f64, extrapolate: bool) -> f64 {
    let n = xs.len();
    if n == 1 {
        return ys[0];
    }
    let seg = match xs.partition_point(|&v| v <= x) {
        0 => {
            if !extrapolate {
                return ys[0];
            }
            0
        }
        k if k >= n => {
            if x == xs[n - 1] || !extrapolate {
                return ys[n - 1];
            }
            n - 2
        }
        k => k - 1,
    };
    let (x0, x1, y0, y1) = (xs[seg], xs[seg + 1], ys[seg], ys[seg + 1]);
    if x == x0 {
        return y0;
    }
    y0 + (x - x0) / (x1 - x0) * (y1 - y0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_endpoints_exact() {
        let g = linspace(0.0, 64.2, 50);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[49], 64.2);
    }

    #[test]
    fn interp_exact_at_nodes() {
        let xs = [0.0, 1.0, 2.5, 4.0];
        let ys = [3.0, 2.0, 7.0, -1.0];
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(interp(&xs, &ys, *x, false), *y);
        }
        assert_eq!(interp(&xs, &ys, 0.5, false), 2.5);
        assert_eq!(interp(&xs, &ys, 5.0, false), -1.0);
        assert_eq!(interp(&xs, &ys, -1.0, true), 4.0);
    }

    #[test]
    fn voc_crossing() {
        let c = IVCurve::new(vec![0.0, 1.0, 2.0], vec![2.0, 1.0, -1.0], EnvCondition::stc()).unwrap();
        assert_eq!(c.voc(), Some(1.5));
        let c = IVCurve::new(vec![0.0, 1.0], vec![2.0, 1.0], EnvCondition::stc()).unwrap();
        assert_eq!(c.voc(), None);
    }

    #[test]
    fn rejects_unsorted() {
        assert!(IVCurve::new(vec![0.0, 0.0], vec![1.0, 1.0], EnvCondition::stc()).is_err());
        assert!(IVCurve::new(vec![0.0], vec![1.0, 1.0], EnvCondition::stc()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let c = IVCurve::new(vec![0.0, 0.1, 0.35], vec![4.1, 3.3, 0.0], EnvCondition::stc()).unwrap();
        c.write_csv(&path).unwrap();
        assert_eq!(IVCurve::read_csv(&path, EnvCondition::stc()).unwrap(), c);
    }
}
