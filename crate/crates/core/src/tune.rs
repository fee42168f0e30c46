//! Seeded random hyperparameter search scored by mean cross-validated R².
//!
//! A search space is a JSON document such as
//!
//! ```json
//! {"params": [
//!   {"name": "lambda", "kind": "real", "low": 1e-4, "high": 10.0},
//!   {"name": "max_depth", "kind": "int", "low": 2, "high": 6},
//!   {"name": "hidden", "kind": "choice", "values": [8, 16, 32]}
//! ]}
//! ```
//!
//! Names address fields of the learner family's default configuration;
//! dotted paths reach nested fields (`bases.1.n_trees`). Real ranges with
//! `low > 0` spanning at least two orders of magnitude are sampled on a log
//! scale unless `scale` says otherwise.

use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::{DataTable, SplitSpec};
use crate::error::{Error, Result};
use crate::evalkit::{cross_validate, Metrics};
use crate::learners::LearnerSpec;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Param {
    Int {
        name: String,
        low: i64,
        high: i64,
    },
    Real {
        name: String,
        low: f64,
        high: f64,
        #[serde(default)]
        scale: Option<Scale>,
    },
    Choice {
        name: String,
        values: Vec<Value>,
    },
}

impl Param {
    pub fn name(&self) -> &str {
        match self {
            Param::Int { name, .. } | Param::Real { name, .. } | Param::Choice { name, .. } => name,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("parameter `{}`: {msg}", self.name())));
        match self {
            Param::Int { low, high, .. } if low > high => bad(format!("low {low} > high {high}")),
            Param::Real { low, high, .. } if !(low.is_finite() && high.is_finite() && low <= high) => {
                bad(format!("bounds [{low}, {high}] are not an ordered finite range"))
            }
            Param::Real {
                low,
                scale: Some(Scale::Log),
                ..
            } if *low <= 0.0 => bad("log scale needs low > 0".into()),
            Param::Choice { values, .. } if values.is_empty() => bad("no choices".into()),
            _ => Ok(()),
        }
    }

    fn log_scale(&self) -> bool {
        match self {
            Param::Real { low, high, scale, .. } => match scale {
                Some(s) => *s == Scale::Log,
                None => *low > 0.0 && *high / *low >= 100.0,
            },
            _ => false,
        }
    }

    pub fn sample(&self, rng: &mut seed::Rng) -> Value {
        match self {
            Param::Int { low, high, .. } => Value::from(rng.random_range(*low..=*high)),
            Param::Real { low, high, .. } => {
                let v = if low == high {
                    *low
                } else if self.log_scale() {
                    rng.random_range(low.ln()..=high.ln()).exp().clamp(*low, *high)
                } else {
                    rng.random_range(*low..=*high)
                };
                Value::from(v)
            }
            Param::Choice { values, .. } => values[rng.random_range(0..values.len())].clone(),
        }
    }

    /// Whether `v` lies within this parameter's bounds or choices.
    pub fn contains(&self, v: &Value) -> bool {
        match self {
            Param::Int { low, high, .. } => v.as_i64().is_some_and(|x| (*low..=*high).contains(&x)),
            Param::Real { low, high, .. } => v.as_f64().is_some_and(|x| (*low..=*high).contains(&x)),
            Param::Choice { values, .. } => values.contains(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<Param>,
}

impl SearchSpace {
    pub fn from_json(text: &str) -> Result<Self> {
        let space: SearchSpace = serde_json::from_str(text)?;
        space.validate()?;
        Ok(space)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(Error::InvalidConfig("search space has no parameters".into()));
        }
        for p in &self.params {
            p.validate()?;
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut seed::Rng) -> Map<String, Value> {
        self.params.iter().map(|p| (p.name().to_string(), p.sample(rng))).collect()
    }
}

fn set_path(root: &mut Value, path: &str, v: Value) -> Result<()> {
    let missing = || Error::InvalidConfig(format!("no hyperparameter `{path}` in this learner"));
    let mut cur = root;
    for key in path.split('.') {
        cur = match cur {
            Value::Object(m) => m.get_mut(key).ok_or_else(missing)?,
            Value::Array(a) => key.parse::<usize>().ok().and_then(|i| a.get_mut(i)).ok_or_else(missing)?,
            _ => return Err(missing()),
        };
    }
    *cur = v;
    Ok(())
}

/// The family's default configuration with `overrides` applied.
pub fn configure(family: &str, overrides: &Map<String, Value>) -> Result<LearnerSpec> {
    let mut doc = serde_json::to_value(LearnerSpec::default_for(family)?)?;
    for (k, v) in overrides {
        if k == "kind" {
            return Err(Error::InvalidConfig("`kind` cannot be tuned".into()));
        }
        set_path(&mut doc, k, v.clone())?;
    }
    let spec: LearnerSpec = serde_json::from_value(doc)?;
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub params: Map<String, Value>,
    /// Mean cross-validated R²; `None` when the trial failed.
    pub objective: Option<f64>,
    pub folds: Vec<Metrics>,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
    pub spec: Option<LearnerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: usize,
    pub trials: Vec<TrialRecord>,
}

impl SearchResult {
    pub fn best_trial(&self) -> &TrialRecord {
        &self.trials[self.best]
    }

    /// Best objective seen up to and including each trial.
    pub fn running_best(&self) -> Vec<Option<f64>> {
        let mut best: Option<f64> = None;
        self.trials
            .iter()
            .map(|t| {
                if let Some(o) = t.objective {
                    best = Some(best.map_or(o, |b| b.max(o)));
                }
                best
            })
            .collect()
    }

    /// Writes `trial,params,objective,status`; `params` is a JSON object.
    pub fn write_ledger(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["trial", "params", "objective", "status"])?;
        for t in &self.trials {
            w.write_record([
                t.trial.to_string(),
                serde_json::to_string(&t.params)?,
                t.objective.map(|o| o.to_string()).unwrap_or_default(),
                t.status.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn run_trial(
    space: &SearchSpace,
    family: &str,
    table: &DataTable,
    split: &SplitSpec,
    trial: usize,
    seed: u64,
) -> TrialRecord {
    let trial_seed = seed::derive(seed, &[trial as u64]);
    let params = space.sample(&mut seed::rng(trial_seed));
    let mut rec = TrialRecord {
        trial,
        seed: trial_seed,
        params,
        objective: None,
        folds: Vec::new(),
        status: "ok".into(),
        spec: None,
    };
    let scored = configure(family, &rec.params).and_then(|spec| {
        let spec = spec.reseeded(trial_seed);
        let report = cross_validate(&spec, table, split)?;
        Ok((spec, report))
    });
    match scored {
        Ok((spec, report)) => {
            let m = &report.models[0];
            rec.folds = m.folds.iter().map(|f| f.metrics).collect();
            if m.mean.r2.is_finite() {
                rec.objective = Some(m.mean.r2);
            } else {
                rec.status = "failed: non-finite objective".into();
            }
            rec.spec = Some(spec);
        }
        Err(e) => rec.status = format!("failed: {e}"),
    }
    rec
}

/// Scores `trials` random configurations of `family`. Failed trials are
/// kept in the record; the best trial is the highest objective, earliest on
/// ties.
pub fn random_search(
    space: &SearchSpace,
    family: &str,
    table: &DataTable,
    split: &SplitSpec,
    trials: usize,
    seed: u64,
) -> Result<SearchResult> {
    space.validate()?;
    LearnerSpec::default_for(family)?;
    if trials < 1 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    let records: Vec<TrialRecord> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(space, family, table, split, t, seed))
        .collect();
    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        if let Some(o) = r.objective {
            if best.is_none_or(|b| o > records[b].objective.unwrap_or(f64::NEG_INFINITY)) {
                best = Some(i);
            }
        }
    }
    match best {
        Some(best) => Ok(SearchResult { best, trials: records }),
        None => Err(Error::AllTrialsFailed(trials)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> DataTable {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, ((i * 7) % 11) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] - 0.5 * r[1] + ((r[0] * 3.0).sin())).collect();
        DataTable::from_matrix(&["a", "b"], &x, &y).unwrap()
    }

    #[test]
    fn parses_and_validates_spaces() {
        let s = SearchSpace::from_json(
            r#"{"params":[{"name":"lambda","kind":"real","low":0.001,"high":10.0},
                          {"name":"fit_intercept","kind":"choice","values":[true]}]}"#,
        )
        .unwrap();
        assert!(s.params[0].log_scale());
        assert!(matches!(SearchSpace::from_json(r#"{"params":[]}"#), Err(Error::InvalidConfig(_))));
        assert!(SearchSpace::from_json(r#"{"params":[{"name":"k","kind":"int","low":5,"high":1}]}"#).is_err());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let mut o = Map::new();
        o.insert("bases.1.n_trees".into(), Value::from(7));
        o.insert("meta_lambda".into(), Value::from(0.5));
        let LearnerSpec::Stacked(s) = configure("se", &o).unwrap() else {
            panic!("wrong family");
        };
        assert_eq!(s.meta_lambda, 0.5);
        assert!(matches!(&s.bases[1], LearnerSpec::Gbt(p) if p.n_trees == 7));
        o.insert("nope".into(), Value::from(1));
        assert!(configure("se", &o).is_err());
    }

    #[test]
    fn single_point_space_repeats_itself() {
        let s = SearchSpace::from_json(r#"{"params":[{"name":"k","kind":"int","low":3,"high":3}]}"#).unwrap();
        let r = random_search(&s, "knn", &table(), &SplitSpec::cv(1), 3, 4).unwrap();
        assert!(r.trials.iter().all(|t| t.params == r.trials[0].params));
        assert!(r.trials.iter().all(|t| t.objective == r.trials[0].objective));
        assert_eq!(r.best, 0);
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let s = SearchSpace::from_json(r#"{"params":[{"name":"k","kind":"int","low":0,"high":40}]}"#).unwrap();
        let r = random_search(&s, "knn", &table(), &SplitSpec::cv(1), 12, 2).unwrap();
        let best = r.best_trial().objective.unwrap();
        assert!(r.trials.iter().filter_map(|t| t.objective).all(|o| o <= best));
        let all_bad = SearchSpace::from_json(r#"{"params":[{"name":"k","kind":"int","low":0,"high":0}]}"#).unwrap();
        assert!(matches!(
            random_search(&all_bad, "knn", &table(), &SplitSpec::cv(1), 2, 2),
            Err(Error::AllTrialsFailed(2))
        ));
    }
}
