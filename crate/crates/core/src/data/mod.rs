//! Data model for multivariate KPI datasets: matrices, labels, entities and
//! the synthetic generator used for tests and demos.

mod io;
mod preprocess;
mod synthetic;

pub use io::{
    discover_entity_dirs, load_dataset, load_entity, read_labels, read_matrix, write_entity,
    LoadOptions,
};
pub use preprocess::{drop_constant_kpis, standardize, KpiScaling};
pub use synthetic::{inject_anomalies, AnomalyShape, InjectionSpec};

use crate::error::{MtadError, Result};

/// Dense row-major matrix of KPI observations. Rows are observations, columns
/// are individual KPIs. Every cell is finite once construction succeeds.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiMatrix {
    values: Vec<f64>,
    n_observations: usize,
    m_kpis: usize,
    kpi_names: Option<Vec<String>>,
}

impl KpiMatrix {
    /// Builds a matrix from a flat row-major buffer, validating shape and
    /// finiteness.
    pub fn new(values: Vec<f64>, n_observations: usize, m_kpis: usize) -> Result<Self> {
        if n_observations == 0 || m_kpis == 0 {
            return Err(MtadError::EmptyInput(
                "matrix must have at least one observation and one KPI".into(),
            ));
        }
        if values.len() != n_observations * m_kpis {
            return Err(MtadError::DimensionMismatch(format!(
                "buffer holds {} cells, expected {}x{}",
                values.len(),
                n_observations,
                m_kpis
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(MtadError::DimensionMismatch(format!(
                "non-finite cell at row {}, column {}",
                idx / m_kpis,
                idx % m_kpis
            )));
        }
        Ok(KpiMatrix {
            values,
            n_observations,
            m_kpis,
            kpi_names: None,
        })
    }

    /// Builds a matrix from observation rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(MtadError::EmptyInput("matrix needs at least one row".into()));
        }
        let m = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(MtadError::DimensionMismatch(format!(
                    "row {} has {} columns, expected {}",
                    i,
                    row.len(),
                    m
                )));
            }
        }
        let mut values = Vec::with_capacity(rows.len() * m);
        for row in rows {
            values.extend_from_slice(row);
        }
        KpiMatrix::new(values, rows.len(), m)
    }

    pub fn n_observations(&self) -> usize {
        self.n_observations
    }

    pub fn m_kpis(&self) -> usize {
        self.m_kpis
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m_kpis..(i + 1) * self.m_kpis]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.m_kpis)
    }

    /// Iterates one column top to bottom.
    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(j).step_by(self.m_kpis).copied()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kpi_names(&self) -> Option<&[String]> {
        self.kpi_names.as_deref()
    }

    pub fn with_kpi_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.m_kpis {
            return Err(MtadError::DimensionMismatch(format!(
                "{} names for {} KPIs",
                names.len(),
                self.m_kpis
            )));
        }
        self.kpi_names = Some(names);
        Ok(self)
    }

    /// Keeps only the given columns, in the given order.
    pub fn select_columns(&self, kept: &[usize]) -> Result<Self> {
        if kept.is_empty() {
            return Err(MtadError::EmptyInput("no columns selected".into()));
        }
        let mut values = Vec::with_capacity(self.n_observations * kept.len());
        for row in self.rows() {
            for &j in kept {
                values.push(row[j]);
            }
        }
        let names = self
            .kpi_names
            .as_ref()
            .map(|n| kept.iter().map(|&j| n[j].clone()).collect());
        let mut out = KpiMatrix::new(values, self.n_observations, kept.len())?;
        out.kpi_names = names;
        Ok(out)
    }
}

/// Per-observation anomaly labels, 0 = normal, 1 = anomalous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector(Vec<u8>);

impl LabelVector {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if labels.is_empty() {
            return Err(MtadError::EmptyInput("label vector is empty".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&v| v > 1) {
            return Err(MtadError::InvalidParam(format!(
                "label value {bad} is not in {{0,1}}"
            )));
        }
        Ok(LabelVector(labels))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.0.iter().copied()
    }

    pub fn count_anomalous(&self) -> usize {
        self.0.iter().filter(|&&v| v == 1).count()
    }

    /// True when both classes are present.
    pub fn has_both_classes(&self) -> bool {
        let ones = self.count_anomalous();
        ones > 0 && ones < self.0.len()
    }
}

/// One monitored entity: a clean train split, a labeled test split.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEntity {
    pub entity_id: String,
    pub train: KpiMatrix,
    pub test: KpiMatrix,
    pub test_labels: LabelVector,
}

impl LabeledEntity {
    pub fn new(
        entity_id: impl Into<String>,
        train: KpiMatrix,
        test: KpiMatrix,
        test_labels: LabelVector,
    ) -> Result<Self> {
        if train.m_kpis() != test.m_kpis() {
            return Err(MtadError::DimensionMismatch(format!(
                "train has {} KPIs, test has {}",
                train.m_kpis(),
                test.m_kpis()
            )));
        }
        if test_labels.len() != test.n_observations() {
            return Err(MtadError::DimensionMismatch(format!(
                "{} labels for {} test observations",
                test_labels.len(),
                test.n_observations()
            )));
        }
        Ok(LabeledEntity {
            entity_id: entity_id.into(),
            train,
            test,
            test_labels,
        })
    }
}

/// A named, ordered collection of entities.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub entities: Vec<LabeledEntity>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, entities: Vec<LabeledEntity>) -> Result<Self> {
        if entities.is_empty() {
            return Err(MtadError::EmptyInput("dataset has no entities".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &entities {
            if !seen.insert(e.entity_id.as_str()) {
                return Err(MtadError::InvalidParam(format!(
                    "duplicate entity id {:?}",
                    e.entity_id
                )));
            }
        }
        Ok(Dataset {
            name: name.into(),
            entities,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_rejects_non_finite() {
        let err = KpiMatrix::new(vec![1.0, f64::NAN], 1, 2).unwrap_err();
        assert!(matches!(err, MtadError::DimensionMismatch(_)));
    }

    #[test]
    fn matrix_rejects_empty() {
        assert!(KpiMatrix::new(vec![], 0, 0).is_err());
    }

    #[test]
    fn column_iteration_is_strided() {
        let m = KpiMatrix::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3, 2).unwrap();
        let col: Vec<f64> = m.column(1).collect();
        assert_eq!(col, vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn labels_reject_out_of_range() {
        assert!(LabelVector::new(vec![0, 1, 2]).is_err());
    }

    #[test]
    fn entity_rejects_kpi_mismatch() {
        let train = KpiMatrix::new(vec![0.0; 8], 2, 4).unwrap();
        let test = KpiMatrix::new(vec![0.0; 6], 2, 3).unwrap();
        let labels = LabelVector::new(vec![0, 1]).unwrap();
        assert!(LabeledEntity::new("e", train, test, labels).is_err());
    }

    #[test]
    fn dataset_rejects_duplicate_ids() {
        let mk = || {
            let train = KpiMatrix::new(vec![0.0, 1.0], 2, 1).unwrap();
            let test = KpiMatrix::new(vec![0.0, 1.0], 2, 1).unwrap();
            LabeledEntity::new("same", train, test, LabelVector::new(vec![0, 1]).unwrap()).unwrap()
        };
        assert!(Dataset::new("d", vec![mk(), mk()]).is_err());
    }
}
