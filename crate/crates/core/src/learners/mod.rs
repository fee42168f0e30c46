//! The learner abstraction and every native model.
//!
//! A [`LearnerSpec`] is an untrained configuration; [`LearnerSpec::build`]
//! turns it into an unfitted [`Model`], and [`Learner::fit`] trains it in
//! place. Trained models are immutable behind [`Regressor`] and serialize to
//! a versioned JSON document.

mod forest;
mod gbt;
mod knn;
pub mod lstm;
mod mlp;
mod optim;
mod ridge;
mod scaler;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::data::{CycleRecord, DataTable};
use crate::ensemble::{StackedEnsemble, StackedSpec};
use crate::error::{Error, Result};

pub use forest::{RandomForest, RfParams};
pub use gbt::{Gbt, GbtParams};
pub use knn::{Knn, KnnParams};
pub use lstm::{Lstm, LstmParams};
pub use mlp::{Mlp, MlpParams};
pub use optim::AdamConfig;
pub use ridge::{Ridge, RidgeParams};
pub use scaler::Scaler;

/// Prediction side of a trained model.
pub trait Regressor: Send + Sync {
    /// One prediction per row of `table`.
    fn predict(&self, table: &DataTable) -> Result<Vec<f64>>;

    /// Which rows of `table` receive a genuine prediction rather than a
    /// fill value. Only sequence models leave rows uncovered.
    fn coverage(&self, table: &DataTable) -> Result<Vec<bool>> {
        Ok(vec![true; table.len()])
    }

    /// Predictions for `candidates` substituted as the features of
    /// `context[row]`. Sequence models keep the row's preceding history;
    /// everything else scores the candidates as standalone rows.
    fn predict_in_context(
        &self,
        context: &DataTable,
        row: usize,
        candidates: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        let anchor = &context.rows()[row];
        let rows = candidates
            .iter()
            .enumerate()
            .map(|(k, x)| CycleRecord {
                source: anchor.source,
                cell_id: format!("{}#{k}", anchor.cell_id),
                cycle: anchor.cycle,
                features: x.clone(),
                target: 0.0,
            })
            .collect();
        self.predict(&DataTable::new(context.schema().to_vec(), rows)?)
    }

    /// Predictions for `context[rows]`, with the rest of `context` available
    /// as feature history. Targets outside `rows` are never read.
    fn predict_rows(&self, context: &DataTable, rows: &[usize]) -> Result<Vec<f64>> {
        self.predict(&context.select(rows))
    }

    /// Coverage of `context[rows]` under the same convention as
    /// [`Regressor::predict_rows`].
    fn coverage_rows(&self, context: &DataTable, rows: &[usize]) -> Result<Vec<bool>> {
        self.coverage(&context.select(rows))
    }
}

/// Kind tag and hyperparameters of a learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub kind: String,
    pub params: serde_json::Value,
}

pub trait Learner: Regressor {
    fn fit(&mut self, table: &DataTable) -> Result<()>;
    fn descriptor(&self) -> Descriptor;
    fn is_fitted(&self) -> bool;
}

/// Untrained learner configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    Ridge(RidgeParams),
    Gbt(GbtParams),
    Lstm(LstmParams),
    Knn(KnnParams),
    RandomForest(RfParams),
    Mlp(MlpParams),
    Stacked(StackedSpec),
}

impl LearnerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LearnerSpec::Ridge(_) => "ridge",
            LearnerSpec::Gbt(_) => "gbt",
            LearnerSpec::Lstm(_) => "lstm",
            LearnerSpec::Knn(_) => "knn",
            LearnerSpec::RandomForest(_) => "random_forest",
            LearnerSpec::Mlp(_) => "mlp",
            LearnerSpec::Stacked(_) => "stacked",
        }
    }

    /// Default configuration of a learner family, by kind tag or short name.
    pub fn default_for(family: &str) -> Result<LearnerSpec> {
        Ok(match family {
            "ridge" => LearnerSpec::Ridge(RidgeParams::default()),
            "gbt" | "xgb" => LearnerSpec::Gbt(GbtParams::default()),
            "lstm" => LearnerSpec::Lstm(LstmParams::default()),
            "knn" => LearnerSpec::Knn(KnnParams::default()),
            "rf" | "random_forest" => LearnerSpec::RandomForest(RfParams::default()),
            "mlp" => LearnerSpec::Mlp(MlpParams::default()),
            "se" | "stacked" => LearnerSpec::Stacked(StackedSpec::default()),
            other => return Err(Error::InvalidConfig(format!("unknown learner family `{other}`"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Ridge(p) => p.validate(),
            LearnerSpec::Gbt(p) => p.validate(),
            LearnerSpec::Lstm(p) => p.validate(),
            LearnerSpec::Knn(p) => p.validate(),
            LearnerSpec::RandomForest(p) => p.validate(),
            LearnerSpec::Mlp(p) => p.validate(),
            LearnerSpec::Stacked(s) => s.validate(),
        }
    }

    pub fn build(&self) -> Model {
        match self {
            LearnerSpec::Ridge(p) => Model::Ridge(Ridge::new(p.clone())),
            LearnerSpec::Gbt(p) => Model::Gbt(Gbt::new(p.clone())),
            LearnerSpec::Lstm(p) => Model::Lstm(Lstm::new(p.clone())),
            LearnerSpec::Knn(p) => Model::Knn(Knn::new(p.clone())),
            LearnerSpec::RandomForest(p) => Model::RandomForest(RandomForest::new(p.clone())),
            LearnerSpec::Mlp(p) => Model::Mlp(Mlp::new(p.clone())),
            LearnerSpec::Stacked(s) => Model::Stacked(StackedEnsemble::new(s.clone())),
        }
    }

    pub fn fit(&self, table: &DataTable) -> Result<Model> {
        let mut m = self.build();
        m.fit(table)?;
        Ok(m)
    }

    /// Copy whose randomness is keyed to `seed`. Deterministic learners are
    /// returned unchanged.
    pub fn reseeded(&self, seed: u64) -> LearnerSpec {
        let mut out = self.clone();
        match &mut out {
            LearnerSpec::Ridge(_) | LearnerSpec::Knn(_) => {}
            LearnerSpec::Gbt(p) => p.seed = seed,
            LearnerSpec::Lstm(p) => p.seed = seed,
            LearnerSpec::RandomForest(p) => p.seed = seed,
            LearnerSpec::Mlp(p) => p.seed = seed,
            LearnerSpec::Stacked(s) => *s = s.reseeded(seed),
        }
        out
    }

    pub fn seed(&self) -> u64 {
        match self {
            LearnerSpec::Ridge(_) | LearnerSpec::Knn(_) => 0,
            LearnerSpec::Gbt(p) => p.seed,
            LearnerSpec::Lstm(p) => p.seed,
            LearnerSpec::RandomForest(p) => p.seed,
            LearnerSpec::Mlp(p) => p.seed,
            LearnerSpec::Stacked(s) => s.cv.seed,
        }
    }
}

/// Any native model, fitted or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Ridge(Ridge),
    Gbt(Gbt),
    Lstm(Lstm),
    Knn(Knn),
    RandomForest(RandomForest),
    Mlp(Mlp),
    Stacked(StackedEnsemble),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            Model::Ridge($m) => $body,
            Model::Gbt($m) => $body,
            Model::Lstm($m) => $body,
            Model::Knn($m) => $body,
            Model::RandomForest($m) => $body,
            Model::Mlp($m) => $body,
            Model::Stacked($m) => $body,
        }
    };
}

impl Regressor for Model {
    fn predict(&self, table: &DataTable) -> Result<Vec<f64>> {
        dispatch!(self, m => m.predict(table))
    }

    fn coverage(&self, table: &DataTable) -> Result<Vec<bool>> {
        dispatch!(self, m => m.coverage(table))
    }

    fn predict_in_context(&self, context: &DataTable, row: usize, candidates: &[Vec<f64>]) -> Result<Vec<f64>> {
        dispatch!(self, m => m.predict_in_context(context, row, candidates))
    }

    fn predict_rows(&self, context: &DataTable, rows: &[usize]) -> Result<Vec<f64>> {
        dispatch!(self, m => m.predict_rows(context, rows))
    }

    fn coverage_rows(&self, context: &DataTable, rows: &[usize]) -> Result<Vec<bool>> {
        dispatch!(self, m => m.coverage_rows(context, rows))
    }
}

impl Learner for Model {
    fn fit(&mut self, table: &DataTable) -> Result<()> {
        dispatch!(self, m => m.fit(table))
    }

    fn descriptor(&self) -> Descriptor {
        dispatch!(self, m => m.descriptor())
    }

    fn is_fitted(&self) -> bool {
        dispatch!(self, m => m.is_fitted())
    }
}

pub const MODEL_FORMAT: &str = "battlife-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: T,
}

/// Wraps `body` in the versioned model envelope.
pub fn to_versioned_json<T: Serialize>(body: &T) -> Result<String> {
    #[derive(Serialize)]
    struct Out<'a, T> {
        format: &'a str,
        version: u32,
        #[serde(flatten)]
        body: &'a T,
    }
    Ok(serde_json::to_string_pretty(&Out {
        format: MODEL_FORMAT,
        version: MODEL_FORMAT_VERSION,
        body,
    })?)
}

pub fn from_versioned_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let env: Envelope<T> = serde_json::from_str(text)?;
    if env.format != MODEL_FORMAT || env.version != MODEL_FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported model document {} v{}",
            env.format, env.version
        )));
    }
    Ok(env.body)
}

#[derive(Serialize, Deserialize)]
struct ModelBody {
    model: Model,
}

impl Model {
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Body<'a> {
            model: &'a Model,
        }
        to_versioned_json(&Body { model: self })
    }

    pub fn from_json(text: &str) -> Result<Model> {
        Ok(from_versioned_json::<ModelBody>(text)?.model)
    }
}

pub(crate) fn fitted<T>(state: &Option<T>) -> Result<&T> {
    state.as_ref().ok_or(Error::NotFitted)
}

pub(crate) fn require_rows(table: &DataTable, min: usize) -> Result<()> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    if table.len() < min {
        return Err(Error::InvalidConfig(format!(
            "need at least {min} rows, got {}",
            table.len()
        )));
    }
    Ok(())
}

pub(crate) fn descriptor_of<P: Serialize>(kind: &str, params: &P) -> Descriptor {
    Descriptor {
        kind: kind.into(),
        params: serde_json::to_value(params).unwrap_or(serde_json::Value::Null),
    }
}
