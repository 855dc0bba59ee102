use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::util::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    RocAuc,
    Accuracy,
}

impl MetricKind {
    /// ROC-AUC for binary problems, accuracy otherwise.
    pub fn for_classes(classes: usize) -> Self {
        if classes == 2 {
            MetricKind::RocAuc
        } else {
            MetricKind::Accuracy
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::RocAuc => "roc_auc",
            MetricKind::Accuracy => "accuracy",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Area under the ROC curve for labels in `{0, 1}` (1 is positive), via the
/// Mann-Whitney rank statistic with tied scores counted as one half.
pub fn roc_auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidArgument(format!("ROC-AUC needs binary labels, got {bad}")));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidArgument(
            "ROC-AUC needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks, 1-based
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&o| labels[o] == 1).count() as f64;
        i = j + 1;
    }
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> Result<f64> {
    if predicted.len() != labels.len() || labels.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Scores an `N x C` discriminant matrix. ROC-AUC ranks by the class-1
/// minus class-0 column; accuracy takes the row argmax.
pub fn score_metric(scores: &Matrix, labels: &[usize], kind: MetricKind) -> Result<f64> {
    match kind {
        MetricKind::RocAuc => {
            if scores.ncols() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "ROC-AUC needs 2 score columns, got {}",
                    scores.ncols()
                )));
            }
            let s: Vec<f64> = scores.row_iter().map(|r| r[1] - r[0]).collect();
            roc_auc(&s, labels)
        }
        MetricKind::Accuracy => {
            let pred: Vec<usize> = scores
                .row_iter()
                .map(|r| argmax(r.iter().copied()).unwrap_or(0))
                .collect();
            accuracy(&pred, labels)
        }
    }
}
