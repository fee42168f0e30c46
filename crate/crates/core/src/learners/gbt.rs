use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::{columns_of, Columns, RegressionTree, TreeParams};
use super::{descriptor_of, fitted, require_rows, Descriptor, Learner, Regressor};
use crate::data::{DataTable, FeatureId};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 4,
            learning_rate: 0.1,
            min_leaf: 2,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 || self.min_leaf < 1 {
            return Err(Error::InvalidConfig("gbt max_depth and min_leaf must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gbt learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gbt subsample must lie in (0, 1], got {}",
                self.subsample
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtState {
    pub schema: Vec<FeatureId>,
    pub base: f64,
    pub trees: Vec<RegressionTree>,
    /// Training MSE after 0, 1, …, n_trees trees.
    pub train_mse: Vec<f64>,
}

/// Squared-loss gradient boosting: `mean(y) + lr·Σ trees`, each tree fit to
/// the current residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbt {
    pub params: GbtParams,
    pub state: Option<GbtState>,
}

impl Gbt {
    pub fn new(params: GbtParams) -> Self {
        Self { params, state: None }
    }

    pub fn train_mse(&self) -> Option<&[f64]> {
        self.state.as_ref().map(|s| s.train_mse.as_slice())
    }
}

fn mse(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64
}

impl Regressor for Gbt {
    fn predict(&self, table: &DataTable) -> Result<Vec<f64>> {
        let s = fitted(&self.state)?;
        table.check_schema(&s.schema)?;
        let lr = self.params.learning_rate;
        Ok(table
            .rows()
            .iter()
            .map(|r| s.base + lr * s.trees.iter().map(|t| t.predict_row(&r.features)).sum::<f64>())
            .collect())
    }
}

impl Learner for Gbt {
    fn fit(&mut self, table: &DataTable) -> Result<()> {
        self.params.validate()?;
        require_rows(table, 2)?;
        let p = &self.params;
        let n = table.len();
        let cols = columns_of(&table.matrix(), table.n_features());
        let x = Columns { cols: &cols };
        let y = table.targets();
        let base = y.iter().sum::<f64>() / n as f64;
        let mut residual: Vec<f64> = y.iter().map(|v| v - base).collect();
        let mut train_mse = vec![mse(&residual)];
        let tree_params = TreeParams {
            max_depth: Some(p.max_depth),
            min_leaf: p.min_leaf,
            features_per_split: None,
        };
        let n_sub = ((p.subsample * n as f64).floor() as usize).clamp(1, n);
        let mut trees = Vec::with_capacity(p.n_trees);
        for t in 0..p.n_trees {
            let mut rng = seed::rng(seed::derive(p.seed, &[t as u64]));
            let rows: Vec<usize> = if n_sub == n {
                (0..n).collect()
            } else {
                let mut r = sample(&mut rng, n, n_sub).into_vec();
                r.sort_unstable();
                r
            };
            let tree = RegressionTree::fit(&x, &residual, &rows, &tree_params, &mut rng);
            for (r, rec) in residual.iter_mut().zip(table.rows()) {
                *r -= p.learning_rate * tree.predict_row(&rec.features);
            }
            train_mse.push(mse(&residual));
            trees.push(tree);
        }
        self.state = Some(GbtState {
            schema: table.schema().to_vec(),
            base,
            trees,
            train_mse,
        });
        Ok(())
    }

    fn descriptor(&self) -> Descriptor {
        descriptor_of("gbt", &self.params)
    }

    fn is_fitted(&self) -> bool {
        self.state.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_trees_predicts_mean() {
        let t = DataTable::from_matrix(&["x"], &[vec![0.0], vec![1.0], vec![5.0]], &[1.0, 2.0, 6.0]).unwrap();
        let mut m = Gbt::new(GbtParams {
            n_trees: 0,
            ..Default::default()
        });
        m.fit(&t).unwrap();
        assert!(m.predict(&t).unwrap().iter().all(|&p| p == 3.0));
    }

    #[test]
    fn single_stump_fits_two_points() {
        let t = DataTable::from_matrix(&["x"], &[vec![0.0], vec![1.0]], &[0.0, 1.0]).unwrap();
        let mut m = Gbt::new(GbtParams {
            n_trees: 1,
            max_depth: 1,
            learning_rate: 1.0,
            min_leaf: 1,
            subsample: 1.0,
            seed: 0,
        });
        m.fit(&t).unwrap();
        assert_eq!(m.predict(&t).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn subsampled_fit_is_seeded() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| ((i as f64) * 0.3).sin()).collect();
        let t = DataTable::from_matrix(&["a", "b"], &x, &y).unwrap();
        let params = GbtParams {
            n_trees: 20,
            subsample: 0.6,
            seed: 9,
            ..Default::default()
        };
        let mut a = Gbt::new(params.clone());
        let mut b = Gbt::new(params);
        a.fit(&t).unwrap();
        b.fit(&t).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_params() {
        let t = DataTable::from_matrix(&["x"], &[vec![0.0], vec![1.0]], &[0.0, 1.0]).unwrap();
        for p in [
            GbtParams { learning_rate: 0.0, ..Default::default() },
            GbtParams { subsample: 1.5, ..Default::default() },
            GbtParams { max_depth: 0, ..Default::default() },
        ] {
            assert!(Gbt::new(p).fit(&t).is_err());
        }
        let one = DataTable::from_matrix(&["x"], &[vec![0.0]], &[0.0]).unwrap();
        assert!(Gbt::new(GbtParams::default()).fit(&one).is_err());
    }
}
