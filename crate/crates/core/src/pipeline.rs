//! Preprocessing recorded next to a trained model, so raw tables can be
//! mapped into the model's feature space later.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DataTable, FeatureId, Normalization, Source};
use crate::error::{Error, Result};
use crate::featsel::{correlation_matrix, prune_multicollinear, DroppedFeature, DEFAULT_COLLINEAR_THRESHOLD};
use crate::learners::{from_versioned_json, to_versioned_json, Model, Regressor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepOptions {
    /// Per-source z-scoring of every feature.
    pub standardize: bool,
    /// Collinearity pruning threshold; `None` keeps every feature.
    pub prune_threshold: Option<f64>,
}

impl Default for PrepOptions {
    fn default() -> Self {
        Self {
            standardize: true,
            prune_threshold: Some(DEFAULT_COLLINEAR_THRESHOLD),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub input_schema: Vec<FeatureId>,
    pub normalization: Option<Normalization>,
    pub retained: Vec<FeatureId>,
    pub dropped: Vec<DroppedFeature>,
}

/// Standardizes then prunes `raw`, returning the model-ready table and the
/// record needed to repeat the transformation.
pub fn prepare(raw: &DataTable, opts: &PrepOptions) -> Result<(DataTable, Preprocessing)> {
    let (table, normalization) = if opts.standardize {
        let norm = Normalization::estimate(raw)?;
        (norm.apply(raw)?, Some(norm))
    } else {
        (raw.clone(), None)
    };
    let (retained, dropped) = match opts.prune_threshold {
        Some(th) => {
            let pr = prune_multicollinear(&correlation_matrix(&table)?, th)?;
            (pr.retained, pr.dropped)
        }
        None => (table.schema().to_vec(), Vec::new()),
    };
    let out = table.project(&retained)?;
    Ok((
        out,
        Preprocessing {
            input_schema: raw.schema().to_vec(),
            normalization,
            retained,
            dropped,
        },
    ))
}

impl Preprocessing {
    fn retained_index(&self) -> Result<Vec<usize>> {
        self.retained
            .iter()
            .map(|f| {
                self.input_schema.iter().position(|g| g == f).ok_or_else(|| Error::SchemaMismatch {
                    expected: self.input_schema.iter().map(|g| g.to_string()).collect(),
                    found: vec![f.to_string()],
                })
            })
            .collect()
    }

    /// Maps one raw feature vector of a `source` row into model space.
    pub fn apply_row(&self, source: Source, raw: &[f64]) -> Result<Vec<f64>> {
        let row = match &self.normalization {
            Some(n) => n.transform_row(source, raw)?,
            None => raw.to_vec(),
        };
        Ok(self.retained_index()?.into_iter().map(|i| row[i]).collect())
    }

    pub fn apply(&self, raw: &DataTable) -> Result<DataTable> {
        raw.check_schema(&self.input_schema)?;
        let t = match &self.normalization {
            Some(n) => n.apply(raw)?,
            None => raw.clone(),
        };
        t.project(&self.retained)
    }
}

/// A trained model together with its preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub preprocessing: Preprocessing,
    pub model: Model,
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        to_versioned_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        from_versioned_json(text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

}

/// Predictions take tables in the original, unprocessed feature space.
impl Regressor for ModelFile {
    fn predict(&self, raw: &DataTable) -> Result<Vec<f64>> {
        self.model.predict(&self.preprocessing.apply(raw)?)
    }

    fn coverage(&self, raw: &DataTable) -> Result<Vec<bool>> {
        self.model.coverage(&self.preprocessing.apply(raw)?)
    }

    fn predict_rows(&self, raw: &DataTable, rows: &[usize]) -> Result<Vec<f64>> {
        self.model.predict_rows(&self.preprocessing.apply(raw)?, rows)
    }

    fn coverage_rows(&self, raw: &DataTable, rows: &[usize]) -> Result<Vec<bool>> {
        self.model.coverage_rows(&self.preprocessing.apply(raw)?, rows)
    }

    fn predict_in_context(&self, raw: &DataTable, row: usize, candidates: &[Vec<f64>]) -> Result<Vec<f64>> {
        let source = raw.rows()[row].source;
        let mapped = candidates
            .iter()
            .map(|c| self.preprocessing.apply_row(source, c))
            .collect::<Result<Vec<_>>>()?;
        self.model.predict_in_context(&self.preprocessing.apply(raw)?, row, &mapped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};
    use crate::learners::LearnerSpec;

    #[test]
    fn round_trip_reproduces_predictions() {
        let ds = synth_generate(&SynthConfig {
            cycles_per_cell: 40,
            ..Default::default()
        })
        .unwrap();
        let (t, prep) = prepare(&ds.table, &PrepOptions::default()).unwrap();
        assert_eq!(prep.retained.len() + prep.dropped.len(), ds.table.n_features());
        let model = LearnerSpec::default_for("ridge").unwrap().fit(&t).unwrap();
        let file = ModelFile {
            preprocessing: prep,
            model,
        };
        let back = ModelFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.predict(&ds.table).unwrap(), file.model.predict(&t).unwrap());
        let x = ds.table.rows()[3].features.clone();
        let ctx = back.predict_in_context(&ds.table, 3, &[x]).unwrap();
        assert!((ctx[0] - file.model.predict(&t).unwrap()[3]).abs() < 1e-12);
    }
}
