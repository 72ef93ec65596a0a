//! Confusion-matrix metrics, per-class reports and ROC analysis with covid19 as
//! the positive class.

use serde::{Deserialize, Serialize};

use crate::data::{ClassOrder, Label};
use crate::error::{Error, Result};
use crate::trainer::PredictionSet;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fn_: usize, fp: usize, tn: usize) -> Self {
        Self { tp, fn_, fp, tn }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// The same matrix with the other class treated as positive.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, fn_: self.fp, fp: self.fn_, tn: self.tp }
    }
}

pub fn confusion(predictions: &PredictionSet) -> ConfusionMatrix {
    let pos = ClassOrder::POSITIVE;
    let mut cm = ConfusionMatrix::default();
    for r in &predictions.rows {
        match (r.true_index == pos, r.predicted_index == pos) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fn_ += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
        }
    }
    cm
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Percentage of correct predictions.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::Metrics("accuracy of an empty confusion matrix".into()));
    }
    Ok(100.0 * (cm.tp + cm.tn) as f64 / cm.total() as f64)
}

/// `tp / (tp + fp)`, or 0 when nothing was predicted positive.
pub fn precision(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.tp, cm.tp + cm.fp)
}

/// `tp / (tp + fn)`, or 0 when there are no positives.
pub fn recall(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.tp, cm.tp + cm.fn_)
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassReport {
    fn from_matrix(label: Label, cm: &ConfusionMatrix) -> Self {
        let (p, r) = (precision(cm), recall(cm));
        Self { label, precision: p, recall: r, f1: f1(p, r) }
    }
}

/// Reports in class order: normal (matrix roles swapped), then covid19.
pub fn per_class_report(cm: &ConfusionMatrix) -> Vec<ClassReport> {
    vec![
        ClassReport::from_matrix(Label::Normal, &cm.swapped()),
        ClassReport::from_matrix(Label::Covid19, cm),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive; the first point uses +∞.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Sweeps thresholds over the distinct scores in descending order. Tied
/// scores enter one point together. The trapezoid sum is accumulated in
/// integer counts and divided once, so the area is exact up to one rounding.
pub fn roc(predictions: &PredictionSet) -> Result<RocCurve> {
    let pos = ClassOrder::POSITIVE;
    let p = predictions.rows.iter().filter(|r| r.true_index == pos).count();
    let n = predictions.rows.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::Metrics(format!("ROC needs both classes, got {p} positive and {n} negative")));
    }
    if predictions.rows.iter().any(|r| !r.score.is_finite()) {
        return Err(Error::Metrics("ROC scores must be finite".into()));
    }
    let mut rows: Vec<(f64, bool)> = predictions.rows.iter().map(|r| (r.score, r.true_index == pos)).collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_tp, mut prev_fp) = (0usize, 0usize);
    // twice the area, in units of 1/(p·n)
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < rows.len() {
        let t = rows[i].0;
        while i < rows.len() && rows[i].0 == t {
            if rows[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += ((fp - prev_fp) * (tp + prev_tp)) as u128;
        (prev_tp, prev_fp) = (tp, fp);
        points.push(RocPoint { threshold: t, fpr: fp as f64 / n as f64, tpr: tp as f64 / p as f64 });
    }
    let auc = area2 as f64 / (2 * p * n) as f64;
    Ok(RocCurve { points, auc })
}

/// Rounds to two decimals, ties to even, so the binary-exact tie 0.625
/// becomes 0.62.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round_ties_even() / 100.0
}

/// [`round2`] rendered with exactly two decimals.
pub fn fmt2(x: f64) -> String {
    format!("{:.2}", round2(x))
}
