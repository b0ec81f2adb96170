//! Precision/recall/F1, point adjustment, and rank-based AUC.

use crate::data::LabelVector;
use crate::error::{MtadError, Result};
use crate::metrics::{extract_segments, ConfusionCounts};
use crate::thresholding::{apply_threshold, PredictionVector};

/// Precision, recall and F1 together with the underlying counts. All three
/// ratios are defined as 0 when there are no true positives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrfResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

/// Computes precision, recall and F1 for a prediction vector against labels.
pub fn precision_recall_f1(pred: &PredictionVector, labels: &LabelVector) -> Result<PrfResult> {
    if pred.len() != labels.len() {
        return Err(MtadError::DimensionMismatch(format!(
            "{} predictions for {} labels",
            pred.len(),
            labels.len()
        )));
    }
    let mut counts = ConfusionCounts::default();
    for (p, y) in pred.iter().zip(labels.iter()) {
        match (p, y) {
            (1, 1) => counts.tp += 1,
            (1, 0) => counts.fp += 1,
            (0, 1) => counts.fn_ += 1,
            (0, 0) => counts.tn += 1,
            _ => unreachable!("prediction and label vectors only hold 0/1"),
        }
    }
    Ok(PrfResult::from_counts(counts))
}

impl PrfResult {
    /// Derives the three scores from raw counts. TP = 0 pins all three to
    /// zero, so empty predictions and empty labels stay well defined.
    pub fn from_counts(counts: ConfusionCounts) -> PrfResult {
        let (precision, recall, f1) = if counts.tp == 0 {
            (0.0, 0.0, 0.0)
        } else {
            let pc = counts.tp as f64 / (counts.tp + counts.fp) as f64;
            let rc = counts.tp as f64 / (counts.tp + counts.fn_) as f64;
            (pc, rc, 2.0 * pc * rc / (pc + rc))
        };
        PrfResult {
            precision,
            recall,
            f1,
            counts,
        }
    }
}

/// Point adjustment: any label segment containing at least one predicted
/// anomaly becomes fully predicted; predictions outside segments are left
/// untouched. Rejects an already adjusted vector.
pub fn adjust_points(pred: &PredictionVector, labels: &LabelVector) -> Result<PredictionVector> {
    if pred.is_adjusted() {
        return Err(MtadError::DoubleAdjustment);
    }
    if pred.len() != labels.len() {
        return Err(MtadError::DimensionMismatch(format!(
            "{} predictions for {} labels",
            pred.len(),
            labels.len()
        )));
    }
    let mut out = pred.as_slice().to_vec();
    for seg in extract_segments(labels) {
        if out[seg.start..=seg.end].contains(&1) {
            out[seg.start..=seg.end].fill(1);
        }
    }
    PredictionVector::adjusted(out)
}

/// Mann-Whitney AUC of scores against labels, with ties contributing 1/2
/// via the midrank convention.
pub fn auc(scores: &[f64], labels: &LabelVector) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(MtadError::DimensionMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if !labels.has_both_classes() {
        return Err(MtadError::DegenerateLabels);
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks: tied scores share the average of their 1-based rank range
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    let n_pos = labels.count_anomalous() as f64;
    let n_neg = n as f64 - n_pos;
    let rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(y, _)| *y == 1)
        .map(|(_, r)| r)
        .sum();
    Ok((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// The four-way accuracy readout: F1 at the automatic threshold and at the
/// searched threshold, each with and without point adjustment. Adjustment
/// only flips FN to TP, so each adjusted F1 dominates its raw counterpart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyQuad {
    pub evt: PrfResult,
    pub evt_adjusted: PrfResult,
    pub search: PrfResult,
    pub search_adjusted: PrfResult,
}

/// Evaluates both thresholds on one normalized score series.
pub fn accuracy_quad(
    normalized: &[f64],
    labels: &LabelVector,
    theta_evt: f64,
    theta_search: f64,
) -> Result<AccuracyQuad> {
    let eval_at = |theta: f64| -> Result<(PrfResult, PrfResult)> {
        let pred = apply_threshold(normalized, theta);
        let raw = precision_recall_f1(&pred, labels)?;
        let adjusted = precision_recall_f1(&adjust_points(&pred, labels)?, labels)?;
        Ok((raw, adjusted))
    };
    let (evt, evt_adjusted) = eval_at(theta_evt)?;
    let (search, search_adjusted) = eval_at(theta_search)?;
    Ok(AccuracyQuad {
        evt,
        evt_adjusted,
        search,
        search_adjusted,
    })
}
