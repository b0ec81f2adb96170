//! Detection delay: how late the first alarm inside each anomalous segment
//! fires, summed over segments.

use crate::data::LabelVector;
use crate::error::{MtadError, Result};
use crate::metrics::extract_segments;
use crate::thresholding::PredictionVector;

/// Sums per-segment delays for an UNADJUSTED prediction vector: a segment's
/// delay is the offset of the first predicted anomaly inside it, and a
/// segment with no alarm at all is charged its full length.
pub fn compute_delay(pred: &PredictionVector, labels: &LabelVector) -> Result<usize> {
    if pred.len() != labels.len() {
        return Err(MtadError::DimensionMismatch(format!(
            "{} predictions for {} labels",
            pred.len(),
            labels.len()
        )));
    }
    let segments = extract_segments(labels);
    if segments.is_empty() {
        return Err(MtadError::EmptyInput(
            "labels contain no anomalous segments".into(),
        ));
    }
    let p = pred.as_slice();
    let mut total = 0usize;
    for seg in segments {
        match p[seg.start..=seg.end].iter().position(|&v| v == 1) {
            Some(offset) => total += offset,
            None => total += seg.len(),
        }
    }
    Ok(total)
}
