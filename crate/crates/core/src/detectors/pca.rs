//! PCA detector: Mahalanobis-style reconstruction score from the train
//! covariance's eigen-decomposition. Projections onto SMALL eigenvalue
//! directions are amplified by the 1/(lambda+eps) weighting, which is what
//! makes deviations from the correlation structure stand out.

use nalgebra::{DMatrix, DVector};

use crate::data::KpiMatrix;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct PcaModel {
    mean: DVector<f64>,
    /// eigenvectors as columns
    components: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eps: f64,
}

impl PcaModel {
    pub fn fit(train: &KpiMatrix, eps: f64) -> Result<Self> {
        let n = train.n_observations();
        let m = train.m_kpis();
        let mut mean = DVector::zeros(m);
        for row in train.rows() {
            for (j, &v) in row.iter().enumerate() {
                mean[j] += v;
            }
        }
        mean /= n as f64;

        let mut centered = DMatrix::zeros(n, m);
        for (i, row) in train.rows().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                centered[(i, j)] = v - mean[j];
            }
        }
        // sample covariance
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        let eigen = cov.symmetric_eigen();
        let eigenvalues = eigen.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        Ok(PcaModel {
            mean,
            components: eigen.eigenvectors,
            eigenvalues,
            eps,
        })
    }

    pub fn m_kpis(&self) -> usize {
        self.mean.len()
    }

    pub fn score(&self, test: &KpiMatrix) -> Vec<f64> {
        let m = self.mean.len();
        test.rows()
            .map(|row| {
                let mut total = 0.0;
                for j in 0..m {
                    let proj: f64 = (0..m)
                        .map(|i| self.components[(i, j)] * (row[i] - self.mean[i]))
                        .sum();
                    total += proj * proj / (self.eigenvalues[j] + self.eps);
                }
                total
            })
            .collect()
    }
}
