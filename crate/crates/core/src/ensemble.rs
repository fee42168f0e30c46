//! Out-of-fold stacking with variance-discounted fusion weights.
//!
//! Each base learner is cross-fitted to produce one out-of-fold column per
//! model. A base model's weight is
//!
//! ```text
//! raw_w = max(R²_cv, 0) / (1 + Var(oof))     norm_w = raw_w / Σ raw_w
//! ```
//!
//! and the meta ridge is fit on the out-of-fold columns scaled by `norm_w`.
//! The bases are then refit on the whole table.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_folds, DataTable, FeatureId, Fold, SplitSpec};
use crate::error::{Error, Result};
use crate::evalkit;
use crate::learners::{descriptor_of, fitted, Descriptor, Learner, LearnerSpec, Model, Regressor};
use crate::linalg::{ridge_solve, RidgeSolution};
use crate::scalar::{population_variance, Real};
use crate::seed;

pub const DEFAULT_META_LAMBDA: f64 = 1e-3;

/// Per-model fusion weights, in base-model order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights<T> {
    pub r2_cv: Vec<T>,
    pub pred_var: Vec<T>,
    pub raw_w: Vec<T>,
    pub norm_w: Vec<T>,
    /// Set when every raw weight was zero and `norm_w` is uniform.
    pub uniform_fallback: bool,
}

/// Turns cross-validated R² and out-of-fold variance into convex weights.
/// All-zero raw weights fall back to `1/B` each.
pub fn compute_weights<T: Real>(r2: &[T], var: &[T]) -> Result<FusionWeights<T>> {
    if r2.len() != var.len() {
        return Err(Error::LengthMismatch {
            left: r2.len(),
            right: var.len(),
        });
    }
    if r2.is_empty() {
        return Err(Error::Empty);
    }
    if let Some(v) = var.iter().find(|v| !(**v >= T::zero())) {
        return Err(Error::InvalidConfig(format!("prediction variance must be >= 0, got {v}")));
    }
    let raw: Vec<T> = r2
        .iter()
        .zip(var)
        .map(|(&r, &v)| r.max(T::zero()) / (T::one() + v))
        .collect();
    let total: T = raw.iter().copied().sum();
    let uniform = !(total > T::zero());
    let norm = if uniform {
        vec![T::one() / T::of_usize(raw.len()); raw.len()]
    } else {
        raw.iter().map(|&w| w / total).collect()
    };
    Ok(FusionWeights {
        r2_cv: r2.to_vec(),
        pred_var: var.to_vec(),
        raw_w: raw,
        norm_w: norm,
        uniform_fallback: uniform,
    })
}

/// Out-of-fold predictions, row-major `n x B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Oof {
    pub n: usize,
    pub models: Vec<String>,
    pub values: Vec<f64>,
    pub r2: Vec<f64>,
    pub var: Vec<f64>,
    pub folds: Vec<Fold>,
    /// Fold in which each row was held out.
    pub fold_of: Vec<usize>,
}

impl Oof {
    pub fn column(&self, i: usize) -> Vec<f64> {
        let b = self.models.len();
        (0..self.n).map(|j| self.values[j * b + i]).collect()
    }
}

/// Seed of a learner on `fold`. It depends only on the learner's own seed and
/// the fold, so identical specs produce identical fits wherever they appear.
pub(crate) fn task_seed(spec: &LearnerSpec, split: &SplitSpec, fold: usize) -> u64 {
    seed::derive(spec.seed(), &[split.seed, fold as u64])
}

pub(crate) fn fit_on_fold(
    spec: &LearnerSpec,
    table: &DataTable,
    fold: &Fold,
    seed: u64,
) -> Result<Model> {
    spec.reseeded(seed).fit(&table.select(&fold.train))
}

pub(crate) fn tagged(spec: &LearnerSpec, fold: usize, e: Error) -> Error {
    Error::Fold {
        model: spec.kind().into(),
        fold,
        source: Box::new(e),
    }
}

pub fn generate_oof(bases: &[LearnerSpec], table: &DataTable, split: &SplitSpec) -> Result<Oof> {
    if bases.is_empty() {
        return Err(Error::InvalidConfig("stacking needs at least one base model".into()));
    }
    let folds = make_folds(table, split)?;
    let n = table.len();
    let b = bases.len();
    let tasks: Vec<(usize, usize)> = (0..b).flat_map(|i| (0..folds.len()).map(move |k| (i, k))).collect();
    let results: Vec<Result<Vec<f64>>> = tasks
        .par_iter()
        .map(|&(i, k)| {
            let spec = &bases[i];
            let fold = &folds[k];
            fit_on_fold(spec, table, fold, task_seed(spec, split, k))
                .and_then(|m| m.predict_rows(table, &fold.validation))
                .map_err(|e| tagged(spec, k, e))
        })
        .collect();

    let mut values = vec![0.0; n * b];
    let mut fold_of = vec![0; n];
    for (&(i, k), res) in tasks.iter().zip(results) {
        let preds = res?;
        for (&j, p) in folds[k].validation.iter().zip(preds) {
            values[j * b + i] = p;
            fold_of[j] = k;
        }
    }
    let y = table.targets();
    let mut oof = Oof {
        n,
        models: bases.iter().map(|s| s.kind().to_string()).collect(),
        values,
        r2: Vec::with_capacity(b),
        var: Vec::with_capacity(b),
        folds,
        fold_of,
    };
    for i in 0..b {
        let col = oof.column(i);
        oof.r2.push(evalkit::r2(&y, &col)?);
        oof.var.push(population_variance(&col));
    }
    Ok(oof)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StackedSpec {
    pub bases: Vec<LearnerSpec>,
    pub cv: SplitSpec,
    pub meta_lambda: f64,
}

impl Default for StackedSpec {
    fn default() -> Self {
        Self {
            bases: ["ridge", "gbt", "lstm"]
                .iter()
                .map(|f| LearnerSpec::default_for(f).expect("built-in family"))
                .collect(),
            cv: SplitSpec::cv(0),
            meta_lambda: DEFAULT_META_LAMBDA,
        }
    }
}

impl StackedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bases.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "stacked ensemble needs at least 2 base models, got {}",
                self.bases.len()
            )));
        }
        for b in &self.bases {
            if matches!(b, LearnerSpec::Stacked(_)) {
                return Err(Error::InvalidConfig("stacked ensembles cannot be nested".into()));
            }
            b.validate()?;
        }
        self.cv.validate()?;
        if !(self.meta_lambda.is_finite() && self.meta_lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "meta_lambda must be finite and >= 0, got {}",
                self.meta_lambda
            )));
        }
        Ok(())
    }

    /// Copy with the fold seed and every base seed keyed to `seed`.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self {
            bases: self
                .bases
                .iter()
                .enumerate()
                .map(|(i, b)| b.reseeded(seed::derive(seed, &[i as u64])))
                .collect(),
            cv: SplitSpec { seed, ..self.cv },
            meta_lambda: self.meta_lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub schema: Vec<FeatureId>,
    pub names: Vec<String>,
    pub bases: Vec<Model>,
    pub weights: FusionWeights<f64>,
    pub meta: RidgeSolution<f64>,
}

/// Ensemble predictions with per-row fill flags.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedPrediction {
    pub values: Vec<f64>,
    pub base: Vec<Vec<f64>>,
    /// True where some base column held a fill value rather than a genuine
    /// prediction.
    pub filled: Vec<bool>,
}

pub fn fit_stacked(spec: &StackedSpec, table: &DataTable) -> Result<StackedModel> {
    spec.validate()?;
    let oof = generate_oof(&spec.bases, table, &spec.cv)?;
    let weights = compute_weights(&oof.r2, &oof.var)?;
    let b = spec.bases.len();
    let scaled: Vec<f64> = oof
        .values
        .chunks_exact(b)
        .flat_map(|row| row.iter().zip(&weights.norm_w).map(|(v, w)| v * w))
        .collect();
    let meta = ridge_solve(&scaled, table.len(), b, &table.targets(), spec.meta_lambda, true)?;
    let bases = spec
        .bases
        .par_iter()
        .map(|s| s.fit(table))
        .collect::<Result<Vec<_>>>()?;
    Ok(StackedModel {
        schema: table.schema().to_vec(),
        names: oof.models,
        bases,
        weights,
        meta,
    })
}

impl StackedModel {
    fn combine(&self, base: Vec<Vec<f64>>, covered: Vec<Vec<bool>>) -> StackedPrediction {
        let n = base.first().map_or(0, Vec::len);
        let values = (0..n)
            .map(|j| {
                let row: Vec<f64> = base.iter().zip(&self.weights.norm_w).map(|(c, w)| c[j] * w).collect();
                self.meta.predict_row(&row)
            })
            .collect();
        let filled = (0..n).map(|j| covered.iter().any(|c| !c[j])).collect();
        StackedPrediction { values, base, filled }
    }

    pub fn predict_detailed(&self, table: &DataTable) -> Result<StackedPrediction> {
        let rows: Vec<usize> = (0..table.len()).collect();
        self.predict_rows_detailed(table, &rows)
    }

    pub fn predict_rows_detailed(&self, context: &DataTable, rows: &[usize]) -> Result<StackedPrediction> {
        context.check_schema(&self.schema)?;
        let base = self
            .bases
            .iter()
            .map(|m| m.predict_rows(context, rows))
            .collect::<Result<Vec<_>>>()?;
        let covered = self
            .bases
            .iter()
            .map(|m| m.coverage_rows(context, rows))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.combine(base, covered))
    }

    /// Writes `model,r2_cv,pred_var,raw_w,norm_w`, one row per base model.
    pub fn write_weights_csv(&self, path: &Path) -> Result<()> {
        write_weights_csv(&self.names, &self.weights, path)
    }
}

pub fn write_weights_csv(names: &[String], w: &FusionWeights<f64>, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["model", "r2_cv", "pred_var", "raw_w", "norm_w"])?;
    for (i, name) in names.iter().enumerate() {
        wtr.write_record([
            name.clone(),
            w.r2_cv[i].to_string(),
            w.pred_var[i].to_string(),
            w.raw_w[i].to_string(),
            w.norm_w[i].to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// The stacked ensemble as a [`Learner`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedEnsemble {
    pub spec: StackedSpec,
    pub fitted: Option<StackedModel>,
}

impl StackedEnsemble {
    pub fn new(spec: StackedSpec) -> Self {
        Self { spec, fitted: None }
    }

    pub fn model(&self) -> Option<&StackedModel> {
        self.fitted.as_ref()
    }
}

impl Regressor for StackedEnsemble {
    fn predict(&self, table: &DataTable) -> Result<Vec<f64>> {
        Ok(fitted(&self.fitted)?.predict_detailed(table)?.values)
    }

    fn predict_rows(&self, context: &DataTable, rows: &[usize]) -> Result<Vec<f64>> {
        Ok(fitted(&self.fitted)?.predict_rows_detailed(context, rows)?.values)
    }

    fn predict_in_context(&self, context: &DataTable, row: usize, candidates: &[Vec<f64>]) -> Result<Vec<f64>> {
        let m = fitted(&self.fitted)?;
        context.check_schema(&m.schema)?;
        let base = m
            .bases
            .iter()
            .map(|b| b.predict_in_context(context, row, candidates))
            .collect::<Result<Vec<_>>>()?;
        let covered = vec![vec![true; candidates.len()]; base.len()];
        Ok(m.combine(base, covered).values)
    }
}

impl Learner for StackedEnsemble {
    fn fit(&mut self, table: &DataTable) -> Result<()> {
        self.fitted = Some(fit_stacked(&self.spec, table)?);
        Ok(())
    }

    fn descriptor(&self) -> Descriptor {
        descriptor_of("stacked", &self.spec)
    }

    fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }
}
