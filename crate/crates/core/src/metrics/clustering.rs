//! Two-cluster complete-linkage agglomeration for one-dimensional values.
//!
//! In one dimension complete-linkage clusters stay contiguous once values are
//! sorted, so the full pairwise agglomeration collapses to repeatedly merging
//! the cheapest ADJACENT pair of intervals, where the cost of merging two
//! intervals is the span of their union. That turns the textbook O(n^3)
//! procedure into a heap-driven O(n log n) one with identical output,
//! including the leftmost-pair tie-break.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{MtadError, Result};

struct Cluster {
    start: usize,
    end: usize,
    version: u32,
    alive: bool,
    prev: Option<usize>,
    next: Option<usize>,
}

/// A potential merge of a cluster with its right neighbor, stamped with the
/// versions both clusters had when the candidate was created. Min-ordered by
/// (cost, left start index), so equal costs resolve to the leftmost pair.
struct Candidate {
    cost: f64,
    left_start: usize,
    left_id: usize,
    right_id: usize,
    left_version: u32,
    right_version: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap and we want the cheapest merge
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.left_start.cmp(&self.left_start))
    }
}

/// Splits a multiset of at least two values into the two clusters left over
/// after complete-linkage agglomeration. Returns them ordered by mean,
/// lower first.
pub fn cluster_two_1d(values: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.len() < 2 {
        return Err(MtadError::EmptyInput(
            "need at least two values to split into two clusters".into(),
        ));
    }
    if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
        return Err(MtadError::InvalidParam(format!(
            "value at index {idx} is not finite"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    let n = sorted.len();
    let mut clusters: Vec<Cluster> = (0..n)
        .map(|i| Cluster {
            start: i,
            end: i,
            version: 0,
            alive: true,
            prev: i.checked_sub(1),
            next: if i + 1 < n { Some(i + 1) } else { None },
        })
        .collect();
    let mut heap = BinaryHeap::with_capacity(n);
    let push = |heap: &mut BinaryHeap<Candidate>, clusters: &[Cluster], left: usize, right: usize| {
        heap.push(Candidate {
            cost: sorted[clusters[right].end] - sorted[clusters[left].start],
            left_start: clusters[left].start,
            left_id: left,
            right_id: right,
            left_version: clusters[left].version,
            right_version: clusters[right].version,
        });
    };
    for i in 0..n - 1 {
        push(&mut heap, &clusters, i, i + 1);
    }

    let mut remaining = n;
    while remaining > 2 {
        let cand = heap.pop().expect("adjacency candidates cannot run out");
        let (l, r) = (cand.left_id, cand.right_id);
        if !clusters[l].alive
            || !clusters[r].alive
            || clusters[l].version != cand.left_version
            || clusters[r].version != cand.right_version
        {
            continue;
        }
        clusters[l].end = clusters[r].end;
        clusters[l].next = clusters[r].next;
        clusters[l].version += 1;
        clusters[r].alive = false;
        if let Some(next) = clusters[r].next {
            clusters[next].prev = Some(l);
        }
        remaining -= 1;
        if let Some(next) = clusters[l].next {
            push(&mut heap, &clusters, l, next);
        }
        // the left neighbor's candidate against `l` went stale with the
        // version bump; re-add it
        if let Some(prev) = clusters[l].prev {
            push(&mut heap, &clusters, prev, l);
        }
    }

    let mut alive = clusters.iter().filter(|c| c.alive);
    let lower = alive.next().expect("two clusters remain");
    let upper = alive.next().expect("two clusters remain");
    Ok((
        sorted[lower.start..=lower.end].to_vec(),
        sorted[upper.start..=upper.end].to_vec(),
    ))
}
