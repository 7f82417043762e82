//! Confusion-matrix statistics. Positive class is REAL = 1, so a false
//! negative is a real photograph classified as AI-generated.

use serde::{Deserialize, Serialize};

use crate::data::DatasetPart;
use crate::nn::{bce_loss, predict_label, Model};
use crate::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Tally predictions against labels; both must be 0/1 vectors.
pub fn confusion(pred_labels: &[u8], true_labels: &[u8]) -> Result<ConfusionCounts, Error> {
    if pred_labels.len() != true_labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions vs {} labels",
            pred_labels.len(),
            true_labels.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &y) in pred_labels.iter().zip(true_labels) {
        if p > 1 || y > 1 {
            return Err(Error::InvalidArgument(format!("non-binary value ({p}, {y})")));
        }
        match (p, y) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 0) => c.tn += 1,
            (0, 1) => c.fn_ += 1,
            _ => unreachable!(),
        }
    }
    Ok(c)
}

/// `tp / (tp + fp)`; 0 when the denominator is 0.
pub fn precision(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fp;
    if denom == 0 {
        0.0
    } else {
        c.tp as f64 / denom as f64
    }
}

/// `tp / (tp + fn)`; 0 when the denominator is 0.
pub fn recall(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fn_;
    if denom == 0 {
        0.0
    } else {
        c.tp as f64 / denom as f64
    }
}

/// `2pr / (p + r)`; 0 when `p + r == 0`.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn accuracy(c: &ConfusionCounts) -> f64 {
    let total = c.total();
    if total == 0 {
        0.0
    } else {
        (c.tp + c.tn) as f64 / total as f64
    }
}

/// One evaluation pass worth of metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_loss: f64,
    /// Set when a 0/0 metric fell back to the 0 convention.
    pub degenerate: bool,
}

impl MetricsReport {
    pub fn from_counts(counts: ConfusionCounts, mean_loss: f64) -> Self {
        let p = precision(&counts);
        let r = recall(&counts);
        let degenerate = counts.tp + counts.fp == 0 || counts.tp + counts.fn_ == 0 || p + r == 0.0;
        Self {
            counts,
            accuracy: accuracy(&counts),
            precision: p,
            recall: r,
            f1: f1(p, r),
            mean_loss,
            degenerate,
        }
    }

    pub fn csv_header() -> &'static str {
        "tp,fp,tn,fn,accuracy,precision,recall,f1,mean_loss"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.counts.tp,
            self.counts.fp,
            self.counts.tn,
            self.counts.fn_,
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.mean_loss
        )
    }
}

/// Single evaluation pass over a dataset part. No parameter mutation.
pub fn evaluate(model: &Model<f32>, part: &DatasetPart, batch_size: usize) -> Result<MetricsReport, Error> {
    if part.is_empty() {
        return Err(Error::Dataset("empty evaluation set".into()));
    }
    let mut counts = ConfusionCounts::default();
    let mut loss_sum = 0.0f64;
    let mut total = 0usize;
    for (batch, labels) in part.sequential_batches(batch_size) {
        let (probs, _) = model.forward(&batch)?;
        for (&p, &y) in probs.iter().zip(&labels) {
            let pred = predict_label(p);
            let truth = if y >= 0.5 { 1u8 } else { 0u8 };
            match (pred, truth) {
                (1, 1) => counts.tp += 1,
                (1, 0) => counts.fp += 1,
                (0, 0) => counts.tn += 1,
                _ => counts.fn_ += 1,
            }
            loss_sum += bce_loss(p as f64, y as f64);
            total += 1;
        }
    }
    Ok(MetricsReport::from_counts(counts, loss_sum / total as f64))
}
