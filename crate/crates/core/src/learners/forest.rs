use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{columns_of, Columns, RegressionTree, TreeParams};
use super::{descriptor_of, fitted, require_rows, Descriptor, Learner, Regressor};
use crate::data::{DataTable, FeatureId};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfParams {
    pub n_trees: usize,
    /// `None` grows trees without a depth limit.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per split; `None` uses `max(1, F/3)`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl RfParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 || self.min_leaf < 1 || self.max_depth == Some(0) || self.features_per_split == Some(0) {
            return Err(Error::InvalidConfig(
                "random forest needs n_trees, min_leaf, max_depth, features_per_split >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfState {
    pub schema: Vec<FeatureId>,
    pub trees: Vec<RegressionTree>,
}

/// Bagged variance-reduction trees with per-split feature subsampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: RfParams,
    pub state: Option<RfState>,
}

impl RandomForest {
    pub fn new(params: RfParams) -> Self {
        Self { params, state: None }
    }
}

impl Regressor for RandomForest {
    fn predict(&self, table: &DataTable) -> Result<Vec<f64>> {
        let s = fitted(&self.state)?;
        table.check_schema(&s.schema)?;
        let k = s.trees.len() as f64;
        Ok(table
            .rows()
            .iter()
            .map(|r| s.trees.iter().map(|t| t.predict_row(&r.features)).sum::<f64>() / k)
            .collect())
    }
}

impl Learner for RandomForest {
    fn fit(&mut self, table: &DataTable) -> Result<()> {
        self.params.validate()?;
        require_rows(table, 1)?;
        let p = &self.params;
        let n = table.len();
        let f = table.n_features();
        let cols = columns_of(&table.matrix(), f);
        let x = Columns { cols: &cols };
        let y = table.targets();
        let tree_params = TreeParams {
            max_depth: p.max_depth,
            min_leaf: p.min_leaf,
            features_per_split: Some(p.features_per_split.unwrap_or((f / 3).max(1)).min(f)),
        };
        let trees = (0..p.n_trees)
            .map(|t| {
                let mut rng = seed::rng(seed::derive(p.seed, &[t as u64]));
                let rows: Vec<usize> = if p.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit(&x, &y, &rows, &tree_params, &mut rng)
            })
            .collect();
        self.state = Some(RfState {
            schema: table.schema().to_vec(),
            trees,
        });
        Ok(())
    }

    fn descriptor(&self) -> Descriptor {
        descriptor_of("random_forest", &self.params)
    }

    fn is_fitted(&self) -> bool {
        self.state.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn degenerate_forest_is_a_single_tree() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| ((i as f64) * 0.7).cos()).collect();
        let t = DataTable::from_matrix(&["a", "b"], &x, &y).unwrap();
        let mut rf = RandomForest::new(RfParams {
            n_trees: 1,
            max_depth: None,
            min_leaf: 1,
            features_per_split: Some(2),
            bootstrap: false,
            seed: 3,
        });
        rf.fit(&t).unwrap();
        let cols = columns_of(&t.matrix(), 2);
        let rows: Vec<usize> = (0..20).collect();
        let tree = RegressionTree::fit(
            &Columns { cols: &cols },
            &y,
            &rows,
            &TreeParams {
                max_depth: None,
                min_leaf: 1,
                features_per_split: None,
            },
            &mut seed::rng(0),
        );
        let expected: Vec<f64> = x.iter().map(|r| tree.predict_row(r)).collect();
        assert_eq!(rf.predict(&t).unwrap(), expected);
        assert_eq!(expected, y);
    }

    #[test]
    fn bagging_is_seeded() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i % 4) as f64, (i % 3) as f64]).collect();
        let y: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let t = DataTable::from_matrix(&["a", "b", "c"], &x, &y).unwrap();
        let p = RfParams { n_trees: 10, seed: 5, ..Default::default() };
        let mut a = RandomForest::new(p.clone());
        let mut b = RandomForest::new(p);
        a.fit(&t).unwrap();
        b.fit(&t).unwrap();
        assert_eq!(a, b);
    }
}
