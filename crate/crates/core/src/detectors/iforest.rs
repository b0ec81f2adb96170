//! Isolation forest with the standard unsuccessful-search path-length
//! normalization, deterministic per seed.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::data::KpiMatrix;
use crate::detectors::SubsampleSpec;
use crate::error::Result;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Average unsuccessful-search path length in a BST over n points.
fn c_factor(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Internal {
        feature: usize,
        split: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn build(
        train: &KpiMatrix,
        rows: &mut [usize],
        rng: &mut ChaCha20Rng,
        height_limit: usize,
    ) -> Tree {
        let mut nodes = Vec::new();
        Self::grow(train, rows, rng, height_limit, 0, &mut nodes);
        Tree { nodes }
    }

    /// Depth-first construction; children are generated left before right so
    /// the RNG stream is a pure function of the subsample.
    fn grow(
        train: &KpiMatrix,
        rows: &mut [usize],
        rng: &mut ChaCha20Rng,
        height_limit: usize,
        depth: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        if depth >= height_limit || rows.len() <= 1 {
            nodes.push(Node::Leaf { size: rows.len() });
            return nodes.len() - 1;
        }
        let m = train.m_kpis();
        // only features that actually vary within this node can split it
        let mut split_candidates = Vec::with_capacity(m);
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); m];
        for &r in rows.iter() {
            let row = train.row(r);
            for (j, &v) in row.iter().enumerate() {
                ranges[j].0 = ranges[j].0.min(v);
                ranges[j].1 = ranges[j].1.max(v);
            }
        }
        for (j, &(lo, hi)) in ranges.iter().enumerate() {
            if hi > lo {
                split_candidates.push(j);
            }
        }
        if split_candidates.is_empty() {
            nodes.push(Node::Leaf { size: rows.len() });
            return nodes.len() - 1;
        }
        let feature = split_candidates[rng.gen_range(0..split_candidates.len())];
        let (lo, hi) = ranges[feature];
        let split = rng.gen_range(lo..hi);
        let pivot = stable_partition(rows, |&r| train.row(r)[feature] < split);
        let slot = nodes.len();
        nodes.push(Node::Leaf { size: 0 }); // placeholder until children exist
        let (left_rows, right_rows) = rows.split_at_mut(pivot);
        let left = Self::grow(train, left_rows, rng, height_limit, depth + 1, nodes);
        let right = Self::grow(train, right_rows, rng, height_limit, depth + 1, nodes);
        nodes[slot] = Node::Internal {
            feature,
            split,
            left,
            right,
        };
        slot
    }

    fn path_length(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        let mut depth = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { size } => return depth as f64 + c_factor(*size),
                Node::Internal {
                    feature,
                    split,
                    left,
                    right,
                } => {
                    idx = if row[*feature] < *split { *left } else { *right };
                    depth += 1;
                }
            }
        }
    }
}

/// In-place stable-enough partition returning the split point; elements
/// satisfying the predicate end up in the prefix, original relative order
/// preserved on both sides.
fn stable_partition(rows: &mut [usize], pred: impl Fn(&usize) -> bool) -> usize {
    let mut reordered: Vec<usize> = rows.iter().copied().filter(|r| pred(r)).collect();
    let pivot = reordered.len();
    reordered.extend(rows.iter().copied().filter(|r| !pred(r)));
    rows.copy_from_slice(&reordered);
    pivot
}

#[derive(Debug, Clone)]
pub struct ForestModel {
    trees: Vec<Tree>,
    c_psi: f64,
    m_kpis: usize,
}

impl ForestModel {
    pub fn fit(
        train: &KpiMatrix,
        n_trees: usize,
        subsample: SubsampleSpec,
        seed: u64,
    ) -> Result<Self> {
        let n = train.n_observations();
        let psi = subsample.resolve(n);
        let height_limit = (psi as f64).log2().ceil() as usize;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let trees = (0..n_trees)
            .map(|_| {
                let mut rows = sample(&mut rng, n, psi).into_vec();
                Tree::build(train, &mut rows, &mut rng, height_limit)
            })
            .collect();
        Ok(ForestModel {
            trees,
            c_psi: c_factor(psi),
            m_kpis: train.m_kpis(),
        })
    }

    pub fn m_kpis(&self) -> usize {
        self.m_kpis
    }

    pub fn score(&self, test: &KpiMatrix) -> Vec<f64> {
        test.rows()
            .map(|row| {
                let mean_path: f64 = self
                    .trees
                    .iter()
                    .map(|t| t.path_length(row))
                    .sum::<f64>()
                    / self.trees.len() as f64;
                2f64.powf(-mean_path / self.c_psi)
            })
            .collect()
    }
}
