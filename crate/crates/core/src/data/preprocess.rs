//! Train-fitted preprocessing applied consistently to both splits.

use crate::data::{KpiMatrix, LabeledEntity};
use crate::error::{MtadError, Result};

/// Per-KPI affine scaling fitted on train data.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiScaling {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

fn column_mean_var(matrix: &KpiMatrix, j: usize) -> (f64, f64) {
    let n = matrix.n_observations() as f64;
    let mean = matrix.column(j).sum::<f64>() / n;
    let var = matrix
        .column(j)
        .map(|v| {
            let d = v - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean, var)
}

/// Removes KPIs whose train column is exactly constant (population variance
/// zero). Returns the filtered entity plus the kept column indices. Errors
/// when every KPI is constant.
pub fn drop_constant_kpis(entity: &LabeledEntity) -> Result<(LabeledEntity, Vec<usize>)> {
    let mut kept = Vec::new();
    for j in 0..entity.train.m_kpis() {
        let (_, var) = column_mean_var(&entity.train, j);
        if var != 0.0 {
            kept.push(j);
        }
    }
    if kept.is_empty() {
        return Err(MtadError::NoInformativeKpis);
    }
    let filtered = LabeledEntity::new(
        entity.entity_id.clone(),
        entity.train.select_columns(&kept)?,
        entity.test.select_columns(&kept)?,
        entity.test_labels.clone(),
    )?;
    Ok((filtered, kept))
}

/// Fits per-KPI z-scoring on the train split and applies it to both splits.
/// A zero-variance column maps to zeros rather than dividing by zero.
pub fn standardize(entity: &LabeledEntity) -> Result<(LabeledEntity, KpiScaling)> {
    let m = entity.train.m_kpis();
    let mut means = Vec::with_capacity(m);
    let mut stds = Vec::with_capacity(m);
    for j in 0..m {
        let (mean, var) = column_mean_var(&entity.train, j);
        means.push(mean);
        stds.push(var.sqrt());
    }
    let apply = |matrix: &KpiMatrix| -> Result<KpiMatrix> {
        let mut values = Vec::with_capacity(matrix.n_observations() * m);
        for row in matrix.rows() {
            for (j, &v) in row.iter().enumerate() {
                let scaled = if stds[j] == 0.0 {
                    0.0
                } else {
                    (v - means[j]) / stds[j]
                };
                values.push(scaled);
            }
        }
        KpiMatrix::new(values, matrix.n_observations(), m)
    };
    let out = LabeledEntity::new(
        entity.entity_id.clone(),
        apply(&entity.train)?,
        apply(&entity.test)?,
        entity.test_labels.clone(),
    )?;
    Ok((out, KpiScaling { means, stds }))
}
