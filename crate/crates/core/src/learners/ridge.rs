use serde::{Deserialize, Serialize};

use super::{descriptor_of, fitted, require_rows, Descriptor, Learner, Regressor};
use crate::data::{DataTable, FeatureId};
use crate::error::{Error, Result};
use crate::linalg::{ridge_solve, RidgeSolution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeParams {
    pub lambda: f64,
    pub fit_intercept: bool,
}

impl Default for RidgeParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            fit_intercept: true,
        }
    }
}

impl RidgeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ridge lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeState {
    pub schema: Vec<FeatureId>,
    pub solution: RidgeSolution<f64>,
}

/// Closed-form L2-regularized least squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ridge {
    pub params: RidgeParams,
    pub state: Option<RidgeState>,
}

impl Ridge {
    pub fn new(params: RidgeParams) -> Self {
        Self { params, state: None }
    }

    /// Already-solved coefficients over `schema`.
    pub fn from_solution(params: RidgeParams, schema: Vec<FeatureId>, solution: RidgeSolution<f64>) -> Self {
        Self {
            params,
            state: Some(RidgeState { schema, solution }),
        }
    }

    pub fn solution(&self) -> Option<&RidgeSolution<f64>> {
        self.state.as_ref().map(|s| &s.solution)
    }

    /// Fits directly on a row-major matrix.
    pub fn fit_matrix(&mut self, schema: Vec<FeatureId>, x: &[f64], y: &[f64]) -> Result<()> {
        self.params.validate()?;
        let p = schema.len();
        let solution = ridge_solve(x, y.len(), p, y, self.params.lambda, self.params.fit_intercept)?;
        self.state = Some(RidgeState { schema, solution });
        Ok(())
    }

    pub fn predict_matrix(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = fitted(&self.state)?;
        let p = s.schema.len();
        Ok(x.chunks_exact(p).map(|r| s.solution.predict_row(r)).collect())
    }
}

impl Regressor for Ridge {
    fn predict(&self, table: &DataTable) -> Result<Vec<f64>> {
        let s = fitted(&self.state)?;
        table.check_schema(&s.schema)?;
        self.predict_matrix(&table.matrix())
    }
}

impl Learner for Ridge {
    fn fit(&mut self, table: &DataTable) -> Result<()> {
        require_rows(table, 1)?;
        self.fit_matrix(table.schema().to_vec(), &table.matrix(), &table.targets())
    }

    fn descriptor(&self) -> Descriptor {
        descriptor_of("ridge", &self.params)
    }

    fn is_fitted(&self) -> bool {
        self.state.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (Ridge, DataTable) {
        let names: Vec<String> = (0..x[0].len()).map(|i| format!("x{i}")).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let t = DataTable::from_matrix(&names, x, y).unwrap();
        let mut m = Ridge::new(RidgeParams {
            lambda,
            fit_intercept: true,
        });
        m.fit(&t).unwrap();
        (m, t)
    }

    #[test]
    fn exact_linear_recovery() {
        let (m, _) = fit(&[vec![1.0], vec![2.0], vec![3.0]], &[2.0, 4.0, 6.0], 0.0);
        let s = m.solution().unwrap();
        assert!((s.coef[0] - 2.0).abs() < 1e-10);
        assert!(s.intercept.abs() < 1e-10);
    }

    #[test]
    fn heavy_shrinkage_predicts_mean() {
        let y = [1.0, 3.0, 2.0, 7.0];
        let (m, t) = fit(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]], &y, 1e12);
        let range = 6.0;
        for p in m.predict(&t).unwrap() {
            assert!((p - 3.25).abs() < 1e-6 * range);
        }
    }

    #[test]
    fn residuals_orthogonal_to_columns() {
        let x = vec![
            vec![1.0, 0.5],
            vec![2.0, -1.0],
            vec![3.0, 4.0],
            vec![0.5, 2.0],
            vec![-1.0, 1.5],
        ];
        let y = [1.0, 2.5, -0.5, 3.0, 0.0];
        let (m, t) = fit(&x, &y, 0.0);
        let pred = m.predict(&t).unwrap();
        let res: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        for j in 0..2 {
            let dot: f64 = res.iter().zip(&x).map(|(r, row)| r * row[j]).sum();
            assert!(dot.abs() < 1e-8);
        }
        assert!(res.iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn predict_before_fit_and_schema_mismatch() {
        let t = DataTable::from_matrix(&["a"], &[vec![1.0]], &[1.0]).unwrap();
        let m = Ridge::new(RidgeParams::default());
        assert!(matches!(m.predict(&t), Err(Error::NotFitted)));
        let (m, _) = fit(&[vec![1.0], vec![2.0]], &[1.0, 2.0], 0.1);
        let other = DataTable::from_matrix(&["b"], &[vec![1.0]], &[1.0]).unwrap();
        assert!(matches!(m.predict(&other), Err(Error::SchemaMismatch { .. })));
    }

    #[test]
    fn empty_prediction_table() {
        let (m, _) = fit(&[vec![1.0], vec![2.0]], &[1.0, 2.0], 0.1);
        let empty = DataTable::from_matrix(&["x0"], &[], &[]).unwrap();
        assert!(m.predict(&empty).unwrap().is_empty());
    }

    #[test]
    fn zero_column_does_not_change_predictions() {
        let x = vec![vec![1.0, 2.0], vec![2.0, 0.0], vec![3.0, 1.0], vec![4.0, 5.0]];
        let y = [1.0, 2.0, 2.5, 5.0];
        let (m1, t1) = fit(&x, &y, 0.5);
        let xz: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0], r[1], 0.0]).collect();
        let (m2, t2) = fit(&xz, &y, 0.5);
        for (a, b) in m1.predict(&t1).unwrap().iter().zip(m2.predict(&t2).unwrap()) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
