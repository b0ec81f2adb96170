//! KNN detector: the anomaly score of a test point is the Euclidean distance
//! to its k-th nearest train point, found by brute force.

use crate::data::KpiMatrix;
use crate::detectors::squared_distance;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct KnnModel {
    train: KpiMatrix,
    k: usize,
}

impl KnnModel {
    pub fn fit(train: &KpiMatrix, k: usize) -> Result<Self> {
        Ok(KnnModel {
            train: train.clone(),
            k,
        })
    }

    pub fn m_kpis(&self) -> usize {
        self.train.m_kpis()
    }

    pub fn score(&self, test: &KpiMatrix) -> Vec<f64> {
        test.rows()
            .map(|row| {
                let mut dists: Vec<f64> = self
                    .train
                    .rows()
                    .map(|t| squared_distance(row, t))
                    .collect();
                let (_, kth, _) = dists.select_nth_unstable_by(self.k - 1, f64::total_cmp);
                kth.sqrt()
            })
            .collect()
    }
}
