//! Evaluation metrics: the F1 family with point adjustment, rank-based AUC,
//! score salience, and detection delay.

mod accuracy;
mod clustering;
mod delay;
mod salience;

pub use accuracy::{accuracy_quad, adjust_points, auc, precision_recall_f1, AccuracyQuad, PrfResult};
pub use clustering::cluster_two_1d;
pub use delay::compute_delay;
pub use salience::{
    aggregate_entity_salience, compute_salience, normalize_across_methods, SalienceBreakdown,
};

use crate::data::LabelVector;

/// Maximal run of anomalous labels. Both ends are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    // segments hold at least one point, so there is no is_empty to pair with
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn contains(&self, idx: usize) -> bool {
        idx >= self.start && idx <= self.end
    }
}

/// Finds the maximal anomalous segments of a label vector, in index order.
pub fn extract_segments(labels: &LabelVector) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut start: Option<usize> = None;
    for (i, v) in labels.iter().enumerate() {
        match (v, start) {
            (1, None) => start = Some(i),
            (0, Some(s)) => {
                segments.push(Segment { start: s, end: i - 1 });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        segments.push(Segment {
            start: s,
            end: labels.len() - 1,
        });
    }
    segments
}

/// Confusion-matrix counts for one prediction/label pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, other: ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}
