use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::DataTable;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grouping {
    ByRow,
    ByCell,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub fold_count: usize,
    pub seed: u64,
    pub grouping: Grouping,
}

impl SplitSpec {
    /// Held-out split default: whole cells go to one side.
    pub fn holdout(seed: u64) -> Self {
        Self {
            test_fraction: 0.2,
            fold_count: 5,
            seed,
            grouping: Grouping::ByCell,
        }
    }

    /// Cross-validation default: 5 row-level folds.
    pub fn cv(seed: u64) -> Self {
        Self {
            test_fraction: 0.2,
            fold_count: 5,
            seed,
            grouping: Grouping::ByRow,
        }
    }

    pub fn with_folds(mut self, k: usize) -> Self {
        self.fold_count = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.fold_count < 2 {
            return Err(Error::InvalidConfig(format!(
                "fold_count must be >= 2, got {}",
                self.fold_count
            )));
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self::cv(0)
    }
}

/// Train/validation row indices of one fold, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

fn groups(table: &DataTable, grouping: Grouping) -> Vec<Vec<usize>> {
    match grouping {
        Grouping::ByRow => (0..table.len()).map(|i| vec![i]).collect(),
        Grouping::ByCell => table.cells().into_iter().map(|(_, idx)| idx).collect(),
    }
}

fn shuffled_groups(table: &DataTable, spec: &SplitSpec) -> Vec<Vec<usize>> {
    let mut g = groups(table, spec.grouping);
    g.shuffle(&mut seed::rng(spec.seed));
    g
}

fn flatten_sorted<'a>(groups: impl Iterator<Item = &'a Vec<usize>>) -> Vec<usize> {
    let mut v: Vec<usize> = groups.flatten().copied().collect();
    v.sort_unstable();
    v
}

/// Seeded train/test partition. The test side receives
/// `round(test_fraction · groups)` groups, kept within `[1, groups − 1]`.
pub fn split(table: &DataTable, spec: &SplitSpec) -> Result<(DataTable, DataTable)> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    spec.validate()?;
    let g = shuffled_groups(table, spec);
    let n_test = if g.len() >= 2 {
        ((spec.test_fraction * g.len() as f64).round() as usize).clamp(1, g.len() - 1)
    } else {
        0
    };
    let test = flatten_sorted(g[..n_test].iter());
    let train = flatten_sorted(g[n_test..].iter());
    Ok((table.select(&train), table.select(&test)))
}

/// Seeded K-fold partition. Validation sets partition the rows; fold sizes
/// differ by at most one group.
pub fn make_folds(table: &DataTable, spec: &SplitSpec) -> Result<Vec<Fold>> {
    if spec.fold_count < 2 {
        return Err(Error::InvalidConfig(format!(
            "fold_count must be >= 2, got {}",
            spec.fold_count
        )));
    }
    let g = shuffled_groups(table, spec);
    let k = spec.fold_count;
    if k > g.len() {
        return Err(Error::TooManyFolds {
            folds: k,
            groups: g.len(),
        });
    }
    let base = g.len() / k;
    let extra = g.len() % k;
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0);
    for f in 0..k {
        bounds.push(bounds[f] + base + usize::from(f < extra));
    }
    Ok((0..k)
        .map(|f| {
            let (lo, hi) = (bounds[f], bounds[f + 1]);
            Fold {
                validation: flatten_sorted(g[lo..hi].iter()),
                train: flatten_sorted(g[..lo].iter().chain(&g[hi..])),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{schema_of, CycleRecord, Source};

    fn table(cells: usize, per_cell: usize) -> DataTable {
        let rows = (0..cells)
            .flat_map(|c| {
                (0..per_cell).map(move |i| CycleRecord {
                    source: Source::Synthetic,
                    cell_id: format!("c{c}"),
                    cycle: i as u64,
                    features: vec![i as f64, c as f64],
                    target: 1.0,
                })
            })
            .collect();
        DataTable::new(schema_of(&["a", "b"]), rows).unwrap()
    }

    #[test]
    fn row_split_sizes() {
        let (train, test) = split(&table(1, 10), &SplitSpec::cv(3)).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
    }

    #[test]
    fn cell_split_keeps_cells_whole() {
        let mut spec = SplitSpec::holdout(11);
        spec.test_fraction = 0.5;
        let (train, test) = split(&table(2, 5), &spec).unwrap();
        assert_eq!((train.len(), test.len()), (5, 5));
        assert_eq!(train.cells().len(), 1);
        assert_eq!(test.cells().len(), 1);
        assert_ne!(train.cells()[0].0, test.cells()[0].0);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let t = table(3, 20);
        let a = split(&t, &SplitSpec::cv(5)).unwrap();
        let b = split(&t, &SplitSpec::cv(5)).unwrap();
        assert_eq!(a, b);
        let c = split(&t, &SplitSpec::cv(6)).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn empty_table_split() {
        let t = DataTable::new(schema_of(&["a", "b"]), vec![]).unwrap();
        assert!(matches!(split(&t, &SplitSpec::cv(0)), Err(Error::EmptyTable)));
    }

    #[test]
    fn five_folds_of_ten_rows() {
        let folds = make_folds(&table(1, 10), &SplitSpec::cv(1)).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = [false; 10];
        for f in &folds {
            assert_eq!(f.validation.len(), 2);
            assert_eq!(f.train.len(), 8);
            for &i in &f.validation {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn leave_one_out_limit() {
        let folds = make_folds(&table(1, 10), &SplitSpec::cv(1).with_folds(10)).unwrap();
        assert!(folds.iter().all(|f| f.validation.len() == 1));
    }

    #[test]
    fn too_many_folds() {
        let mut spec = SplitSpec::cv(1).with_folds(5);
        spec.grouping = Grouping::ByCell;
        assert!(matches!(
            make_folds(&table(4, 3), &spec),
            Err(Error::TooManyFolds { folds: 5, groups: 4 })
        ));
    }

    #[test]
    fn uneven_folds_differ_by_one() {
        let folds = make_folds(&table(1, 13), &SplitSpec::cv(2)).unwrap();
        let sizes: Vec<usize> = folds.iter().map(|f| f.validation.len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 13);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
