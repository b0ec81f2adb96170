//! Local Outlier Factor against train-split neighborhoods.
//!
//! Fit precomputes each train point's k-distance (excluding itself) and local
//! reachability density. Scoring a test point compares its own reachability
//! density with its neighbors'. Neighborhoods include every point tied at the
//! k-distance, so duplicate-heavy data needs no special casing beyond the
//! density cap.

use crate::data::KpiMatrix;
use crate::detectors::squared_distance;
use crate::error::Result;

/// Floor on mean reachability before inverting it into a density; turns the
/// all-duplicates case into a finite density cap of 1e12.
const REACH_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LofModel {
    train: KpiMatrix,
    k: usize,
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
}

/// Distances from one point to every train row.
fn distances_to_train(train: &KpiMatrix, row: &[f64]) -> Vec<f64> {
    train
        .rows()
        .map(|t| squared_distance(row, t).sqrt())
        .collect()
}

/// k-distance and the neighborhood (all points within it, ties included)
/// given precomputed distances; `exclude` drops the self-distance slot.
fn neighborhood(dists: &[f64], k: usize, exclude: Option<usize>) -> (f64, Vec<usize>) {
    let mut order: Vec<usize> = (0..dists.len())
        .filter(|&i| Some(i) != exclude)
        .collect();
    order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]));
    let k_dist = dists[order[k - 1]];
    let neighbors = order
        .into_iter()
        .take_while(|&i| dists[i] <= k_dist)
        .collect();
    (k_dist, neighbors)
}

fn lrd_from(dists: &[f64], neighbors: &[usize], k_distance: &[f64]) -> f64 {
    let reach_sum: f64 = neighbors
        .iter()
        .map(|&o| dists[o].max(k_distance[o]))
        .sum();
    1.0 / (reach_sum / neighbors.len() as f64).max(REACH_FLOOR)
}

impl LofModel {
    pub fn fit(train: &KpiMatrix, k: usize) -> Result<Self> {
        let n = train.n_observations();
        let mut k_distance = vec![0.0; n];
        let mut neighborhoods = Vec::with_capacity(n);
        for (i, row) in train.rows().enumerate() {
            let dists = distances_to_train(train, row);
            let (k_dist, neighbors) = neighborhood(&dists, k, Some(i));
            k_distance[i] = k_dist;
            neighborhoods.push((dists, neighbors));
        }
        let lrd = neighborhoods
            .iter()
            .map(|(dists, neighbors)| lrd_from(dists, neighbors, &k_distance))
            .collect();
        Ok(LofModel {
            train: train.clone(),
            k,
            k_distance,
            lrd,
        })
    }

    pub fn m_kpis(&self) -> usize {
        self.train.m_kpis()
    }

    pub fn score(&self, test: &KpiMatrix) -> Vec<f64> {
        test.rows()
            .map(|row| {
                let dists = distances_to_train(&self.train, row);
                let (_, neighbors) = neighborhood(&dists, self.k, None);
                let own_lrd = lrd_from(&dists, &neighbors, &self.k_distance);
                let neighbor_lrd: f64 =
                    neighbors.iter().map(|&o| self.lrd[o]).sum::<f64>() / neighbors.len() as f64;
                neighbor_lrd / own_lrd
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn grid_10x10() -> KpiMatrix {
        let rows: Vec<Vec<f64>> = (0..10)
            .flat_map(|x| (0..10).map(move |y| vec![x as f64, y as f64]))
            .collect();
        KpiMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn grid_center_is_an_inlier() {
        let train = grid_10x10();
        let test = KpiMatrix::from_rows(&[vec![4.5, 4.5]]).unwrap();
        let model = LofModel::fit(&train, 8).unwrap();
        let lof = model.score(&test)[0];
        assert!((0.9..=1.1).contains(&lof), "grid-center LOF {lof}");
    }

    #[test]
    fn far_point_is_an_outlier() {
        let train = grid_10x10();
        let test = KpiMatrix::from_rows(&[vec![104.5, 4.5]]).unwrap();
        let model = LofModel::fit(&train, 8).unwrap();
        let lof = model.score(&test)[0];
        assert!(lof > 1.5, "distant-point LOF {lof}");
    }

    #[test]
    fn duplicate_heavy_train_stays_finite() {
        let mut rows = vec![vec![1.0, 1.0]; 30];
        rows.extend(vec![vec![4.0, 4.0]; 5]);
        let train = KpiMatrix::from_rows(&rows).unwrap();
        let test = KpiMatrix::from_rows(&[vec![1.0, 1.0], vec![100.0, 100.0]]).unwrap();
        let model = LofModel::fit(&train, 5).unwrap();
        let scores = model.score(&test);
        assert!(scores.iter().all(|s| s.is_finite()));
        assert!(scores[1] > scores[0]);
    }

    /// Textbook LOF computed directly from the definitions on full distance
    /// matrices, with no shortcuts shared with the implementation.
    fn lof_oracle(train: &[Vec<f64>], test: &[Vec<f64>], k: usize) -> Vec<f64> {
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let n = train.len();
        let k_dist_of = |p: &[f64], exclude: Option<usize>| -> f64 {
            let mut ds: Vec<f64> = (0..n)
                .filter(|&j| Some(j) != exclude)
                .map(|j| dist(p, &train[j]))
                .collect();
            ds.sort_by(f64::total_cmp);
            ds[k - 1]
        };
        let neighbors_of = |p: &[f64], exclude: Option<usize>, k_dist: f64| -> Vec<usize> {
            (0..n)
                .filter(|&j| Some(j) != exclude && dist(p, &train[j]) <= k_dist)
                .collect()
        };
        let train_k_dist: Vec<f64> = (0..n).map(|i| k_dist_of(&train[i], Some(i))).collect();
        let lrd_of = |p: &[f64], neighbors: &[usize]| -> f64 {
            let sum: f64 = neighbors
                .iter()
                .map(|&o| dist(p, &train[o]).max(train_k_dist[o]))
                .sum();
            neighbors.len() as f64 / sum
        };
        let train_lrd: Vec<f64> = (0..n)
            .map(|i| {
                let nb = neighbors_of(&train[i], Some(i), train_k_dist[i]);
                lrd_of(&train[i], &nb)
            })
            .collect();
        test.iter()
            .map(|p| {
                let kd = k_dist_of(p, None);
                let nb = neighbors_of(p, None, kd);
                let own = lrd_of(p, &nb);
                let avg: f64 = nb.iter().map(|&o| train_lrd[o]).sum::<f64>() / nb.len() as f64;
                avg / own
            })
            .collect()
    }

    #[test]
    fn matches_textbook_oracle_on_random_data() {
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        for trial in 0..5 {
            let n = rng.gen_range(30..=100);
            let k = rng.gen_range(2..=10);
            let train_rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect())
                .collect();
            let test_rows: Vec<Vec<f64>> = (0..15)
                .map(|_| (0..2).map(|_| rng.gen_range(-4.0..4.0)).collect())
                .collect();
            let model =
                LofModel::fit(&KpiMatrix::from_rows(&train_rows).unwrap(), k).unwrap();
            let got = model.score(&KpiMatrix::from_rows(&test_rows).unwrap());
            let want = lof_oracle(&train_rows, &test_rows, k);
            for (g, w) in got.iter().zip(&want) {
                assert!(
                    (g - w).abs() <= 1e-9 * w.abs().max(1.0),
                    "trial {trial}: {g} vs oracle {w}"
                );
            }
        }
    }
}
