//! Score normalization and the three ways to turn scores into predictions:
//! an automatic tail-based threshold, an exhaustive F1-supervised search, and
//! a fixed user-supplied value.

mod pot;

pub use pot::pot_threshold;

use crate::data::LabelVector;
use crate::error::{MtadError, Result};
use crate::metrics::precision_recall_f1;

pub const DEFAULT_RISK_Q: f64 = 1e-3;
pub const DEFAULT_INIT_QUANTILE: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdStrategy {
    Evt,
    Search,
    Fixed,
}

/// Diagnostics of one tail fit: the quantile level actually used for the
/// initial threshold (it may have been lowered to gather enough excesses),
/// the risk, the fitted tail parameters, and the excess count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvtParams {
    pub init_quantile: f64,
    pub risk_q: f64,
    pub gamma_hat: f64,
    pub sigma_hat: f64,
    pub n_excesses: usize,
}

/// A chosen threshold plus how it was chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    pub theta: f64,
    pub strategy: ThresholdStrategy,
    pub evt_params: Option<EvtParams>,
    pub search_f1: Option<f64>,
}

impl ThresholdResult {
    pub fn fixed(theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(MtadError::InvalidParam(format!(
                "fixed threshold {theta} is not finite"
            )));
        }
        Ok(ThresholdResult {
            theta,
            strategy: ThresholdStrategy::Fixed,
            evt_params: None,
            search_f1: None,
        })
    }
}

/// Binary predictions over a score series. The `adjusted` flag records
/// whether point adjustment has been applied, so it cannot run twice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionVector {
    predictions: Vec<u8>,
    adjusted: bool,
}

impl PredictionVector {
    pub fn new(predictions: Vec<u8>) -> Result<Self> {
        if predictions.is_empty() {
            return Err(MtadError::EmptyInput("prediction vector is empty".into()));
        }
        if let Some(&bad) = predictions.iter().find(|&&v| v > 1) {
            return Err(MtadError::InvalidParam(format!(
                "prediction value {bad} is not in {{0,1}}"
            )));
        }
        Ok(PredictionVector {
            predictions,
            adjusted: false,
        })
    }

    /// Marks a vector as the output of point adjustment.
    pub(crate) fn adjusted(predictions: Vec<u8>) -> Result<Self> {
        let mut out = PredictionVector::new(predictions)?;
        out.adjusted = true;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.predictions
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.predictions.iter().copied()
    }

    pub fn is_adjusted(&self) -> bool {
        self.adjusted
    }

    pub fn count_alarms(&self) -> usize {
        self.predictions.iter().filter(|&&v| v == 1).count()
    }
}

/// Min-max normalizes scores into [0,1]. A constant series maps to all
/// zeros.
pub fn normalize_scores(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(MtadError::EmptyInput("score series is empty".into()));
    }
    if let Some(idx) = raw.iter().position(|v| !v.is_finite()) {
        return Err(MtadError::InvalidParam(format!(
            "score at index {idx} is not finite"
        )));
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![0.0; raw.len()]);
    }
    Ok(raw.iter().map(|&v| (v - min) / (max - min)).collect())
}

/// Flags every score at or above theta as anomalous.
pub fn apply_threshold(normalized: &[f64], theta: f64) -> PredictionVector {
    PredictionVector {
        predictions: normalized
            .iter()
            .map(|&s| if s >= theta { 1 } else { 0 })
            .collect(),
        adjusted: false,
    }
}

/// Sweeps theta over {0.00, 0.01, ..., 1.00} and keeps the value maximizing
/// UNADJUSTED F1, breaking ties toward the largest theta.
pub fn search_threshold(normalized: &[f64], labels: &LabelVector) -> Result<ThresholdResult> {
    if normalized.len() != labels.len() {
        return Err(MtadError::DimensionMismatch(format!(
            "{} scores for {} labels",
            normalized.len(),
            labels.len()
        )));
    }
    if !labels.has_both_classes() {
        return Err(MtadError::DegenerateLabels);
    }
    let mut best_theta = 0.0;
    let mut best_f1 = f64::NEG_INFINITY;
    for step in 0..=100u32 {
        let theta = f64::from(step) / 100.0;
        let f1 = precision_recall_f1(&apply_threshold(normalized, theta), labels)?.f1;
        if f1 >= best_f1 {
            best_f1 = f1;
            best_theta = theta;
        }
    }
    Ok(ThresholdResult {
        theta: best_theta,
        strategy: ThresholdStrategy::Search,
        evt_params: None,
        search_f1: Some(best_f1),
    })
}
