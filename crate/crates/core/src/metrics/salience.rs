//! Salience: how strongly a detector's scores separate anomalous points from
//! normal ones, via support-point clustering and a weighted mean discrepancy.

use std::collections::BTreeMap;

use crate::data::LabelVector;
use crate::error::{MtadError, Result};
use crate::metrics::cluster_two_1d;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// The higher-mean cluster of a value multiset. Sets that cannot split into
/// two distinct-mean clusters (size one, or all values equal) are their own
/// support set.
fn support_points(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() == 1 || values.iter().all(|&v| v == values[0]) {
        return Ok(values.to_vec());
    }
    let (_, upper) = cluster_two_1d(values)?;
    Ok(upper)
}

/// Full salience readout: the two support sets, their means, the sigmoid
/// count weights, and the final weighted discrepancy.
#[derive(Debug, Clone, PartialEq)]
pub struct SalienceBreakdown {
    pub asp: Vec<f64>,
    pub nsp: Vec<f64>,
    pub mu_a: f64,
    pub mu_n: f64,
    pub w_a: f64,
    pub w_n: f64,
    pub salience: f64,
}

/// Computes salience of normalized scores against labels:
/// `w_a * mu_a - w_n * mu_n`, where mu_a/mu_n are the means of the anomalous
/// and normal support sets and each weight is the sigmoid of that set's share
/// of the combined support count.
pub fn compute_salience(normalized: &[f64], labels: &LabelVector) -> Result<SalienceBreakdown> {
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
    let mut anomalous = Vec::new();
    let mut normal = Vec::new();
    for (&s, y) in normalized.iter().zip(labels.iter()) {
        if y == 1 {
            anomalous.push(s);
        } else {
            normal.push(s);
        }
    }
    let asp = support_points(&anomalous)?;
    let nsp = support_points(&normal)?;
    let mu_a = mean(&asp);
    let mu_n = mean(&nsp);
    let total = (asp.len() + nsp.len()) as f64;
    let w_a = sigmoid(asp.len() as f64 / total);
    let w_n = sigmoid(nsp.len() as f64 / total);
    Ok(SalienceBreakdown {
        salience: w_a * mu_a - w_n * mu_n,
        asp,
        nsp,
        mu_a,
        mu_n,
        w_a,
        w_n,
    })
}

/// Dataset-level salience is the plain sum of per-entity saliences.
pub fn aggregate_entity_salience(per_entity: &[f64]) -> Result<f64> {
    if per_entity.is_empty() {
        return Err(MtadError::EmptyInput(
            "no per-entity saliences to aggregate".into(),
        ));
    }
    Ok(per_entity.iter().sum())
}

/// Min-max normalizes saliences across methods. A single method, or methods
/// with all-equal saliences, map to 1.0.
pub fn normalize_across_methods(per_method: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let min = per_method.values().copied().fold(f64::INFINITY, f64::min);
    let max = per_method
        .values()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    per_method
        .iter()
        .map(|(k, &v)| {
            let scaled = if max == min { 1.0 } else { (v - min) / (max - min) };
            (k.clone(), scaled)
        })
        .collect()
}
