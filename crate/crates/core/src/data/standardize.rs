use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DataTable, Source};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
}

/// Per-source, per-feature z-score parameters mapping original values to
/// the current ones: `current = (original − mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub per_source: BTreeMap<Source, Vec<FeatureStats>>,
}

impl Normalization {
    /// Estimates stats from `table`, grouped by source, using the sample
    /// standard deviation.
    pub fn estimate(table: &DataTable) -> Result<Self> {
        let mut groups: BTreeMap<Source, Vec<usize>> = BTreeMap::new();
        for (i, r) in table.rows().iter().enumerate() {
            groups.entry(r.source).or_default().push(i);
        }
        let mut per_source = BTreeMap::new();
        for (source, idx) in groups {
            let stats = (0..table.n_features())
                .map(|f| {
                    let vals: Vec<f64> = idx.iter().map(|&i| table.rows()[i].features[f]).collect();
                    let n = vals.len() as f64;
                    let mean = vals.iter().sum::<f64>() / n;
                    let ss = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
                    let distinct = vals.iter().any(|&v| v != vals[0]);
                    let std = if vals.len() >= 2 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
                    if !distinct || !(std > 0.0) {
                        return Err(Error::DegenerateFeature {
                            source_tag: source.to_string(),
                            feature: table.schema()[f].to_string(),
                        });
                    }
                    Ok(FeatureStats { mean, std })
                })
                .collect::<Result<Vec<_>>>()?;
            per_source.insert(source, stats);
        }
        Ok(Self { per_source })
    }

    fn stats_for(&self, source: Source) -> Result<&[FeatureStats]> {
        self.per_source
            .get(&source)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingStats(source.to_string()))
    }

    /// Standardizes one feature vector from `source`.
    pub fn transform_row(&self, source: Source, row: &[f64]) -> Result<Vec<f64>> {
        let stats = self.stats_for(source)?;
        if stats.len() != row.len() {
            return Err(Error::LengthMismatch {
                left: stats.len(),
                right: row.len(),
            });
        }
        Ok(row.iter().zip(stats).map(|(v, s)| (v - s.mean) / s.std).collect())
    }

    /// Standardizes `table` with these stats. The recorded metadata of the
    /// result composes with any normalization `table` already carried.
    pub fn apply(&self, table: &DataTable) -> Result<DataTable> {
        let mut out = table.clone();
        for r in &mut out.rows {
            let stats = self.stats_for(r.source)?;
            if stats.len() != r.features.len() {
                return Err(Error::LengthMismatch {
                    left: stats.len(),
                    right: r.features.len(),
                });
            }
            for (v, s) in r.features.iter_mut().zip(stats) {
                *v = (*v - s.mean) / s.std;
            }
        }
        let recorded = match table.normalization() {
            None => self.clone(),
            Some(prev) => prev.then(self)?,
        };
        Ok(out.with_normalization(Some(recorded)))
    }

    /// Composition: first `self`, then `next`.
    fn then(&self, next: &Normalization) -> Result<Normalization> {
        let mut per_source = BTreeMap::new();
        for (source, first) in &self.per_source {
            let Some(second) = next.per_source.get(source) else {
                continue;
            };
            let composed = first
                .iter()
                .zip(second)
                .map(|(a, b)| FeatureStats {
                    mean: a.mean + a.std * b.mean,
                    std: a.std * b.std,
                })
                .collect();
            per_source.insert(*source, composed);
        }
        Ok(Normalization { per_source })
    }

    pub(crate) fn project(&self, idx: &[usize]) -> Normalization {
        Normalization {
            per_source: self
                .per_source
                .iter()
                .map(|(s, stats)| (*s, idx.iter().map(|&i| stats[i]).collect()))
                .collect(),
        }
    }
}

/// Per-source z-scoring of every feature; the target is left untouched.
///
/// Stats come from `stats_source` when given (e.g. a training table applied
/// to a test table), otherwise from `table` itself.
pub fn standardize(table: &DataTable, stats_source: Option<&DataTable>) -> Result<DataTable> {
    let norm = Normalization::estimate(stats_source.unwrap_or(table))?;
    norm.apply(table)
}

/// Undoes the recorded normalization, recovering original feature values.
pub fn unstandardize(table: &DataTable) -> Result<DataTable> {
    let Some(norm) = table.normalization() else {
        return Ok(table.clone());
    };
    let mut out = table.clone();
    for r in &mut out.rows {
        let stats = norm.stats_for(r.source)?;
        for (v, s) in r.features.iter_mut().zip(stats) {
            *v = *v * s.std + s.mean;
        }
    }
    Ok(out.with_normalization(None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{schema_of, CycleRecord};

    fn table(vals: &[(Source, f64, f64)]) -> DataTable {
        let rows = vals
            .iter()
            .enumerate()
            .map(|(i, &(s, a, b))| CycleRecord {
                source: s,
                cell_id: "c".into(),
                cycle: i as u64,
                features: vec![a, b],
                target: 1.0 + i as f64,
            })
            .collect();
        DataTable::new(schema_of(&["a", "b"]), rows).unwrap()
    }

    #[test]
    fn unit_sample_std_gives_plain_centering() {
        let t = table(&[
            (Source::Nasa, 1.0, 0.0),
            (Source::Nasa, 2.0, 5.0),
            (Source::Nasa, 3.0, 7.0),
        ]);
        let s = standardize(&t, None).unwrap();
        assert_eq!(s.column(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(s.targets(), t.targets());
    }

    #[test]
    fn groups_are_per_source() {
        let t = table(&[
            (Source::Nasa, 1.0, 0.0),
            (Source::Nasa, 3.0, 1.0),
            (Source::Calce, 100.0, 0.0),
            (Source::Calce, 300.0, 1.0),
        ]);
        let s = standardize(&t, None).unwrap();
        let a = s.column(0);
        assert!((a[0] - a[2]).abs() < 1e-12 && (a[1] - a[3]).abs() < 1e-12);
        assert_eq!(s.normalization().unwrap().per_source.len(), 2);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let t = table(&[(Source::Nasa, 1.0, 2.0), (Source::Nasa, 1.0, 3.0)]);
        assert!(matches!(
            standardize(&t, None),
            Err(Error::DegenerateFeature { feature, .. }) if feature == "a"
        ));
    }

    #[test]
    fn restandardizing_is_idempotent_and_invertible() {
        let t = table(&[
            (Source::Nasa, 1.5, 0.2),
            (Source::Nasa, 2.0, 5.1),
            (Source::Nasa, 7.25, -3.0),
            (Source::Nasa, 4.0, 1.0),
        ]);
        let once = standardize(&t, None).unwrap();
        let twice = standardize(&once, None).unwrap();
        for (a, b) in once.matrix().iter().zip(twice.matrix()) {
            assert!((a - b).abs() < 1e-12);
        }
        let back = unstandardize(&twice).unwrap();
        for (a, b) in back.matrix().iter().zip(t.matrix()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(back.normalization().is_none());
    }

    #[test]
    fn unknown_source_in_target_table() {
        let train = table(&[(Source::Nasa, 1.0, 0.0), (Source::Nasa, 2.0, 1.0)]);
        let test = table(&[(Source::Nca, 1.0, 0.0)]);
        assert!(matches!(
            standardize(&test, Some(&train)),
            Err(Error::MissingStats(_))
        ));
    }
}
