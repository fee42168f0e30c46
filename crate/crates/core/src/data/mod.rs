//! Unified per-cycle data model and everything that produces or partitions it.

mod csvio;
mod split;
mod standardize;
mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csvio::{load_csv, read_table_csv, write_table_csv, LoadReport, Mapping};
pub use split::{make_folds, split, Fold, Grouping, SplitSpec};
pub use standardize::{standardize, unstandardize, FeatureStats, Normalization};
pub use synth::{synth_generate, CellMeta, ChemistryPreset, SynthConfig, SyntheticDataset};

/// Feature names of the canonical per-cycle schema, in emission order.
pub const CANONICAL_FEATURES: [&str; 10] = [
    "Qdlin",
    "CVCT",
    "Temp_m",
    "Current_m",
    "Voltage_m",
    "Voltage_l",
    "SOH",
    "ir",
    "chargetime",
    "CCCT",
];

/// Name of a feature column. Comparisons are exact and case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureId(String);

impl FeatureId {
    pub fn new(name: impl Into<String>) -> Self {
        FeatureId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FeatureId {
    fn from(s: &str) -> Self {
        FeatureId(s.to_owned())
    }
}

impl PartialEq<str> for FeatureId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for FeatureId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

pub fn schema_of(names: &[&str]) -> Vec<FeatureId> {
    names.iter().map(|&n| FeatureId::from(n)).collect()
}

/// Where a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "NASA")]
    Nasa,
    #[serde(rename = "CALCE")]
    Calce,
    #[serde(rename = "MIT_TRC")]
    MitTrc,
    #[serde(rename = "NCA")]
    Nca,
    #[serde(rename = "SYNTHETIC")]
    Synthetic,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Nasa => "NASA",
            Source::Calce => "CALCE",
            Source::MitTrc => "MIT_TRC",
            Source::Nca => "NCA",
            Source::Synthetic => "SYNTHETIC",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "NASA" => Ok(Source::Nasa),
            "CALCE" => Ok(Source::Calce),
            "MIT_TRC" => Ok(Source::MitTrc),
            "NCA" => Ok(Source::Nca),
            "SYNTHETIC" => Ok(Source::Synthetic),
            other => Err(Error::Parse(format!("unknown source `{other}`"))),
        }
    }
}

/// One charge/discharge cycle of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub source: Source,
    pub cell_id: String,
    pub cycle: u64,
    /// Aligned with the owning table's schema.
    pub features: Vec<f64>,
    /// Discharge capacity in Ah.
    pub target: f64,
}

/// Identifies one physical cell across sources.
pub type CellKey = (Source, String);

/// Row-major table of cycle records sharing one schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTable {
    schema: Vec<FeatureId>,
    rows: Vec<CycleRecord>,
    normalization: Option<Normalization>,
}

impl DataTable {
    /// Validates schema uniqueness, row width, finiteness and key uniqueness.
    pub fn new(schema: Vec<FeatureId>, rows: Vec<CycleRecord>) -> Result<Self> {
        let mut names = HashSet::new();
        for f in &schema {
            if !names.insert(f.as_str()) {
                return Err(Error::InvalidConfig(format!("feature `{f}` listed twice")));
            }
        }
        let mut keys = HashSet::with_capacity(rows.len());
        for r in &rows {
            if r.features.len() != schema.len() {
                return Err(Error::LengthMismatch {
                    left: r.features.len(),
                    right: schema.len(),
                });
            }
            if !r.target.is_finite() || r.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite value in cell {} cycle {}",
                    r.cell_id, r.cycle
                )));
            }
            if !keys.insert((r.source, r.cell_id.as_str(), r.cycle)) {
                return Err(Error::DuplicateKey {
                    source_tag: r.source.to_string(),
                    cell_id: r.cell_id.clone(),
                    cycle: r.cycle,
                });
            }
        }
        Ok(Self {
            schema,
            rows,
            normalization: None,
        })
    }

    /// Builds a single-cell synthetic-tagged table from a feature matrix.
    /// Cycle indices follow row order.
    pub fn from_matrix(names: &[&str], x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        let rows = x
            .iter()
            .zip(y)
            .enumerate()
            .map(|(i, (f, &t))| CycleRecord {
                source: Source::Synthetic,
                cell_id: "cell-0".into(),
                cycle: i as u64,
                features: f.clone(),
                target: t,
            })
            .collect();
        Self::new(schema_of(names), rows)
    }

    pub(crate) fn with_normalization(mut self, normalization: Option<Normalization>) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn schema(&self) -> &[FeatureId] {
        &self.schema
    }

    pub fn schema_names(&self) -> Vec<String> {
        self.schema.iter().map(|f| f.to_string()).collect()
    }

    pub fn rows(&self) -> &[CycleRecord] {
        &self.rows
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|f| f == name)
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.features[idx]).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.target).collect()
    }

    /// Row-major `n x F` feature matrix.
    pub fn matrix(&self) -> Vec<f64> {
        self.rows
            .iter()
            .flat_map(|r| r.features.iter().copied())
            .collect()
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> DataTable {
        DataTable {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            normalization: self.normalization.clone(),
        }
    }

    /// Projects onto the named features, in the given order.
    pub fn project(&self, names: &[FeatureId]) -> Result<DataTable> {
        let idx = names
            .iter()
            .map(|n| {
                self.feature_index(n.as_str())
                    .ok_or_else(|| Error::MissingColumn(n.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = self
            .rows
            .iter()
            .map(|r| CycleRecord {
                features: idx.iter().map(|&i| r.features[i]).collect(),
                ..r.clone()
            })
            .collect();
        let normalization = self.normalization.as_ref().map(|n| n.project(&idx));
        Ok(DataTable {
            schema: names.to_vec(),
            rows,
            normalization,
        })
    }

    /// Same rows with one feature column replaced.
    pub fn with_column(&self, idx: usize, values: &[f64]) -> DataTable {
        let mut out = self.clone();
        for (r, &v) in out.rows.iter_mut().zip(values) {
            r.features[idx] = v;
        }
        out
    }

    /// Row indices grouped by cell, cells in order of first appearance and each
    /// cell's rows sorted by cycle index.
    pub fn cells(&self) -> Vec<(CellKey, Vec<usize>)> {
        let mut order: Vec<CellKey> = Vec::new();
        let mut groups: BTreeMap<CellKey, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            let key = (r.source, r.cell_id.clone());
            let entry = groups.entry(key.clone()).or_default();
            if entry.is_empty() {
                order.push(key);
            }
            entry.push(i);
        }
        order
            .into_iter()
            .map(|k| {
                let mut idx = groups.remove(&k).unwrap_or_default();
                idx.sort_by_key(|&i| self.rows[i].cycle);
                (k, idx)
            })
            .collect()
    }

    /// Errors unless `other` has the same feature names in the same order.
    pub fn check_schema(&self, expected: &[FeatureId]) -> Result<()> {
        if self.schema != expected {
            return Err(Error::SchemaMismatch {
                expected: expected.iter().map(|f| f.to_string()).collect(),
                found: self.schema_names(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(cell: &str, cycle: u64, f: f64) -> CycleRecord {
        CycleRecord {
            source: Source::Nasa,
            cell_id: cell.into(),
            cycle,
            features: vec![f, 2.0 * f],
            target: 1.0,
        }
    }

    #[test]
    fn rejects_duplicate_keys() {
        let err = DataTable::new(schema_of(&["a", "b"]), vec![rec("x", 1, 0.0), rec("x", 1, 1.0)]);
        assert!(matches!(err, Err(Error::DuplicateKey { .. })));
    }

    #[test]
    fn rejects_ragged_rows() {
        let mut r = rec("x", 1, 0.0);
        r.features.pop();
        assert!(DataTable::new(schema_of(&["a", "b"]), vec![r]).is_err());
    }

    #[test]
    fn cells_group_and_sort_by_cycle() {
        let t = DataTable::new(
            schema_of(&["a", "b"]),
            vec![rec("x", 3, 0.0), rec("y", 0, 0.0), rec("x", 1, 0.0)],
        )
        .unwrap();
        let cells = t.cells();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].0 .1, "x");
        assert_eq!(cells[0].1, vec![2, 0]);
        assert_eq!(cells[1].1, vec![1]);
    }

    #[test]
    fn projection_reorders_columns() {
        let t = DataTable::new(schema_of(&["a", "b"]), vec![rec("x", 1, 3.0)]).unwrap();
        let p = t.project(&schema_of(&["b", "a"])).unwrap();
        assert_eq!(p.rows()[0].features, vec![6.0, 3.0]);
        assert!(matches!(
            t.project(&schema_of(&["zz"])),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn source_names_round_trip() {
        for s in [Source::Nasa, Source::Calce, Source::MitTrc, Source::Nca, Source::Synthetic] {
            assert_eq!(s.as_str().parse::<Source>().unwrap(), s);
        }
        assert!("nasa".parse::<Source>().is_err());
    }
}
