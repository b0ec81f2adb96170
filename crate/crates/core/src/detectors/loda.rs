//! LODA: an ensemble of sparse random 1-d projections, each paired with an
//! equal-width histogram density estimate fitted on the training projection.
//! The anomaly score is the mean negative log density across projections.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::data::KpiMatrix;
use crate::Result;

/// Density floor: keeps log-densities finite for empty bins and out-of-range
/// projections.
const DENSITY_FLOOR: f64 = 1e-12;

/// Equal-width histogram over the training projection's range.
#[derive(Debug, Clone)]
struct Histogram {
    min: f64,
    width: f64,
    /// Per-bin density, already floored.
    densities: Vec<f64>,
    /// Set when the training projection was constant: the single observed
    /// value. Density is 1.0 exactly at that value, the floor elsewhere.
    constant: Option<f64>,
}

impl Histogram {
    fn fit(values: &[f64], n_bins: usize) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == min {
            return Histogram {
                min,
                width: 0.0,
                densities: Vec::new(),
                constant: Some(min),
            };
        }
        let width = (max - min) / n_bins as f64;
        let mut counts = vec![0usize; n_bins];
        for &v in values {
            // The maximum lands exactly on the right edge; clamp it into the
            // last bin.
            let idx = (((v - min) / width) as usize).min(n_bins - 1);
            counts[idx] += 1;
        }
        let n = values.len() as f64;
        let densities = counts
            .iter()
            .map(|&c| (c as f64 / (n * width)).max(DENSITY_FLOOR))
            .collect();
        Histogram {
            min,
            width,
            densities,
            constant: None,
        }
    }

    fn density(&self, v: f64) -> f64 {
        if let Some(c) = self.constant {
            return if v == c { 1.0 } else { DENSITY_FLOOR };
        }
        if v < self.min {
            return DENSITY_FLOOR;
        }
        let idx = ((v - self.min) / self.width) as usize;
        if idx >= self.densities.len() {
            // At or beyond the right edge. The edge itself belongs to the
            // last bin; past it is out of range.
            if v <= self.min + self.width * self.densities.len() as f64 {
                return self.densities[self.densities.len() - 1];
            }
            return DENSITY_FLOOR;
        }
        self.densities[idx]
    }
}

#[derive(Debug, Clone)]
pub struct LodaModel {
    /// Dense m-length vectors with ceil(sqrt(m)) nonzero Gaussian entries.
    projections: Vec<Vec<f64>>,
    histograms: Vec<Histogram>,
    m_kpis: usize,
}

impl LodaModel {
    pub fn fit(train: &KpiMatrix, n_projections: usize, n_bins: usize, seed: u64) -> Result<Self> {
        let m = train.m_kpis();
        let n = train.n_observations();
        let nnz = (m as f64).sqrt().ceil() as usize;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);

        let mut projections = Vec::with_capacity(n_projections);
        let mut histograms = Vec::with_capacity(n_projections);
        for _ in 0..n_projections {
            let indices = sample(&mut rng, m, nnz).into_vec();
            let mut w = vec![0.0; m];
            for idx in indices {
                w[idx] = rng.sample::<f64, _>(StandardNormal);
            }
            let mut projected = Vec::with_capacity(n);
            for i in 0..n {
                projected.push(project(train.row(i), &w));
            }
            histograms.push(Histogram::fit(&projected, n_bins));
            projections.push(w);
        }

        Ok(LodaModel {
            projections,
            histograms,
            m_kpis: m,
        })
    }

    pub fn score(&self, test: &KpiMatrix) -> Vec<f64> {
        let k = self.projections.len() as f64;
        (0..test.n_observations())
            .map(|i| {
                let row = test.row(i);
                let mut total = 0.0;
                for (w, hist) in self.projections.iter().zip(&self.histograms) {
                    total += hist.density(project(row, w)).ln();
                }
                -total / k
            })
            .collect()
    }

    pub fn m_kpis(&self) -> usize {
        self.m_kpis
    }
}

fn project(row: &[f64], w: &[f64]) -> f64 {
    row.iter().zip(w).map(|(x, wi)| x * wi).sum()
}
