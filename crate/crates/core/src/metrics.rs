//! Confusion matrix, per-class precision/recall/F1, accuracies and
//! one-vs-rest ROC curves.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("confusion matrix has no counts")]
    EmptyMatrix,
    #[error("confusion matrix must be square and non-empty")]
    NotSquare,
    #[error("class {class} out of range for {n_classes} classes")]
    ClassOutOfRange { class: usize, n_classes: usize },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("ROC for class {class} needs both positive and negative examples")]
    SingleClass { class: usize },
    #[error("score {0} is not finite")]
    NonFinite(f64),
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let n = counts.len();
        if n == 0 || counts.iter().any(|row| row.len() != n) {
            return Err(MetricsError::NotSquare);
        }
        Ok(Self { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<(), MetricsError> {
        let n = self.n_classes();
        for class in [truth, predicted] {
            if class >= n {
                return Err(MetricsError::ClassOutOfRange { class, n_classes: n });
            }
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|c| self.counts[c][c]).sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }
}

/// All percentages are in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    /// One-vs-rest AUC per class, filled in from the per-frame scores;
    /// `None` where the class has no positive or no negative frame.
    pub auc: Vec<Option<f64>>,
    /// `(metric, class)` pairs whose denominator was zero and were set to 0.
    pub undefined: Vec<(String, usize)>,
}

fn percent(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

pub fn metrics_from_confusion(matrix: &ConfusionMatrix) -> Result<MetricsReport, MetricsError> {
    let total = matrix.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let n = matrix.n_classes();
    let mut undefined = Vec::new();
    let mut precision = Vec::with_capacity(n);
    let mut recall = Vec::with_capacity(n);
    let mut f1 = Vec::with_capacity(n);
    for c in 0..n {
        let tp = matrix.counts[c][c];
        let p = percent(tp, matrix.col_sum(c)).unwrap_or_else(|| {
            undefined.push(("precision".to_string(), c));
            0.0
        });
        let r = percent(tp, matrix.row_sum(c)).unwrap_or_else(|| {
            undefined.push(("recall".to_string(), c));
            0.0
        });
        let f = if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            undefined.push(("f1".to_string(), c));
            0.0
        };
        precision.push(p);
        recall.push(r);
        f1.push(f);
    }
    let balanced_accuracy = recall.iter().sum::<f64>() / n as f64;
    Ok(MetricsReport {
        precision,
        recall,
        f1,
        accuracy: 100.0 * matrix.trace() as f64 / total as f64,
        balanced_accuracy,
        auc: Vec::new(),
        undefined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub class: usize,
    /// From `(0, 0)` at threshold `+∞` to `(1, 1)`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// One-vs-rest ROC of class `class`. `scores[i]` is frame `i`'s probability
/// for that class. Frames sharing a score move the curve in one step.
pub fn roc_auc(scores: &[f64], labels: &[usize], class: usize) -> Result<RocCurve, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(bad));
    }
    let positives = labels.iter().filter(|&&l| l == class).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClass { class });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == class {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = points.last().expect("curve starts at the origin");
        let (fpr, tpr) = (fp as f64 / negatives as f64, tp as f64 / positives as f64);
        auc += (fpr - prev.fpr) * (tpr + prev.tpr) / 2.0;
        points.push(RocPoint { threshold, fpr, tpr });
    }
    Ok(RocCurve { class, points, auc })
}
