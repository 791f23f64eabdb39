//! Confusion matrix and one-vs-rest classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts with rows indexed by the true class and columns by the prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix { n_classes, counts: vec![vec![0; n_classes]; n_classes] }
    }

    pub fn from_predictions(n_classes: usize, truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::LengthMismatch { left: truth.len(), right: pred.len() });
        }
        let mut m = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::InvalidParameter(format!("class index out of range: {t}, {p}")));
            }
            m.counts[t][p] += 1;
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|k| self.counts[k][k]).sum()
    }

    /// `(tp, fp, fn, tn)` of class `k` against the rest.
    pub fn one_vs_rest(&self, k: usize) -> (u64, u64, u64, u64) {
        let tp = self.counts[k][k];
        let fp = (0..self.n_classes).map(|t| self.counts[t][k]).sum::<u64>() - tp;
        let fn_ = self.counts[k].iter().sum::<u64>() - tp;
        (tp, fp, fn_, self.total() - tp - fp - fn_)
    }

    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut out = String::from("true\\pred");
        for l in labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (k, row) in self.counts.iter().enumerate() {
            out.push_str(&labels[k]);
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a denominator was zero and the metric was reported as 0.
    pub undefined: bool,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Macro averages of the per-class values.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64, undefined: &mut bool) -> f64 {
    if den == 0 {
        *undefined = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision `TP/(TP+FP)`, recall `TP/(TP+FN)`, their harmonic mean and the
/// accuracy `trace/total`; class-level values are macro-averaged.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyTestSet);
    }
    let per_class: Vec<ClassMetrics> = (0..cm.n_classes)
        .map(|k| {
            let (tp, fp, fn_, _) = cm.one_vs_rest(k);
            let mut undefined = false;
            let precision = ratio(tp, tp + fp, &mut undefined);
            let recall = ratio(tp, tp + fn_, &mut undefined);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                undefined = true;
                0.0
            };
            ClassMetrics { precision, recall, f1, undefined, support: tp + fn_ }
        })
        .collect();
    let n = cm.n_classes as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n;
    Ok(Metrics {
        accuracy: cm.trace() as f64 / total as f64,
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        per_class,
    })
}

/// Binary accuracy `(TP+TN)/(TP+FP+FN+TN)`.
pub fn binary_accuracy(tp: u64, fp: u64, fn_: u64, tn: u64) -> f64 {
    (tp + tn) as f64 / (tp + fp + fn_ + tn) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y: Vec<usize> = (0..27).map(|k| k % 9).collect();
        let m = metrics(&ConfusionMatrix::from_predictions(9, &y, &y).unwrap()).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_evaluated_binary_counts() {
        // Class 0 is positive: TP=2, FN=1, FP=1, TN=6.
        let cm = ConfusionMatrix { n_classes: 2, counts: vec![vec![2, 1], vec![1, 6]] };
        let (tp, fp, fn_, tn) = cm.one_vs_rest(0);
        assert_eq!((tp, fp, fn_, tn), (2, 1, 1, 6));
        let m = metrics(&cm).unwrap();
        let c0 = &m.per_class[0];
        assert!((c0.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((c0.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((c0.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(binary_accuracy(tp, fp, fn_, tn), 0.8);
        assert_eq!(m.accuracy, 0.8);
    }

    #[test]
    fn constant_predictor_on_balanced_set() {
        let y: Vec<usize> = (0..90).map(|k| k % 9).collect();
        let cm = ConfusionMatrix::from_predictions(9, &y, &vec![4; 90]).unwrap();
        let m = metrics(&cm).unwrap();
        assert!((m.accuracy - 1.0 / 9.0).abs() < 1e-15);
        assert!(m.per_class[0].undefined);
        assert_eq!(m.per_class[0].precision, 0.0);
        assert_eq!(cm.total(), 90);
        for (k, row) in cm.counts.iter().enumerate() {
            assert_eq!(row.iter().sum::<u64>(), 10, "class {k}");
        }
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(metrics(&ConfusionMatrix::new(3)), Err(Error::EmptyTestSet)));
    }
}
