use serde::{Deserialize, Serialize};

use super::{descriptor_of, fitted, require_rows, Descriptor, Learner, Regressor, Scaler};
use crate::data::{DataTable, FeatureId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

impl KnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidConfig("knn k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnState {
    pub schema: Vec<FeatureId>,
    pub scaler: Scaler,
    /// Standardized training rows, row-major.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Mean target of the `k` nearest training rows under Euclidean distance on
/// standardized features. Equal distances resolve to the lower row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub params: KnnParams,
    pub state: Option<KnnState>,
}

impl Knn {
    pub fn new(params: KnnParams) -> Self {
        Self { params, state: None }
    }
}

impl Regressor for Knn {
    fn predict(&self, table: &DataTable) -> Result<Vec<f64>> {
        let s = fitted(&self.state)?;
        table.check_schema(&s.schema)?;
        let p = s.schema.len();
        let k = self.params.k;
        Ok(table
            .rows()
            .iter()
            .map(|r| {
                let q = s.scaler.transform_row(&r.features);
                let mut d: Vec<(f64, usize)> = s
                    .x
                    .chunks_exact(p)
                    .enumerate()
                    .map(|(i, row)| (row.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d[..k].iter().map(|&(_, i)| s.y[i]).sum::<f64>() / k as f64
            })
            .collect())
    }
}

impl Learner for Knn {
    fn fit(&mut self, table: &DataTable) -> Result<()> {
        self.params.validate()?;
        require_rows(table, self.params.k)?;
        let p = table.n_features();
        let raw = table.matrix();
        let scaler = Scaler::fit(&raw, p);
        self.state = Some(KnnState {
            schema: table.schema().to_vec(),
            x: scaler.transform(&raw),
            scaler,
            y: table.targets(),
        });
        Ok(())
    }

    fn descriptor(&self) -> Descriptor {
        descriptor_of("knn", &self.params)
    }

    fn is_fitted(&self) -> bool {
        self.state.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> DataTable {
        let x: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64, ((i * 5) % 9) as f64]).collect();
        let y: Vec<f64> = (0..9).map(|i| (i * i) as f64 * 0.1).collect();
        DataTable::from_matrix(&["a", "b"], &x, &y).unwrap()
    }

    #[test]
    fn one_neighbor_reproduces_training_targets() {
        let t = table();
        let mut m = Knn::new(KnnParams { k: 1 });
        m.fit(&t).unwrap();
        assert_eq!(m.predict(&t).unwrap(), t.targets());
    }

    #[test]
    fn k_equals_n_predicts_global_mean() {
        let t = table();
        let mean = t.targets().iter().sum::<f64>() / 9.0;
        let mut m = Knn::new(KnnParams { k: 9 });
        m.fit(&t).unwrap();
        assert!(m.predict(&t).unwrap().iter().all(|p| (p - mean).abs() < 1e-12));
    }

    #[test]
    fn equidistant_neighbors_resolve_to_lower_index() {
        let t = DataTable::from_matrix(&["a", "b"], &[vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 5.0]], &[10.0, 20.0, 30.0])
            .unwrap();
        let mut m = Knn::new(KnnParams { k: 1 });
        m.fit(&t).unwrap();
        let q = DataTable::from_matrix(&["a", "b"], &[vec![1.0, 0.0]], &[0.0]).unwrap();
        assert_eq!(m.predict(&q).unwrap(), vec![10.0]);
    }

    #[test]
    fn needs_at_least_k_rows() {
        let mut m = Knn::new(KnnParams { k: 20 });
        assert!(m.fit(&table()).is_err());
    }
}
