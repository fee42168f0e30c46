//! Regression metrics, K-fold scoring and multi-model comparison.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_folds, split, DataTable, SplitSpec};
use crate::ensemble::{fit_on_fold, tagged, task_seed};
use crate::error::{Error, Result};
use crate::learners::{LearnerSpec, Regressor};
use crate::scalar::Real;

fn check_pair<T>(y: &[T], yhat: &[T]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty);
    }
    Ok(())
}

pub fn mae<T: Real>(y: &[T], yhat: &[T]) -> Result<T> {
    check_pair(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(&a, &b)| (a - b).abs()).sum::<T>() / T::of_usize(y.len()))
}

pub fn rmse<T: Real>(y: &[T], yhat: &[T]) -> Result<T> {
    check_pair(y, yhat)?;
    let mse = y.iter().zip(yhat).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / T::of_usize(y.len());
    Ok(mse.sqrt())
}

/// `1 − SS_res / SS_tot`, with `SS_tot` taken around the mean of `y` itself.
pub fn r2<T: Real>(y: &[T], yhat: &[T]) -> Result<T> {
    check_pair(y, yhat)?;
    let mean = y.iter().copied().sum::<T>() / T::of_usize(y.len());
    let ss_tot: T = y.iter().map(|&a| (a - mean) * (a - mean)).sum();
    if !(ss_tot > T::zero()) {
        return Err(Error::ConstantTarget);
    }
    let ss_res: T = y.iter().zip(yhat).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(T::one() - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
}

impl Metrics {
    pub fn score(y: &[f64], yhat: &[f64]) -> Result<Self> {
        Ok(Self {
            mae: mae(y, yhat)?,
            rmse: rmse(y, yhat)?,
            r2: r2(y, yhat)?,
        })
    }

    fn aggregate(items: &[Metrics]) -> (Metrics, Metrics) {
        let n = items.len().max(1) as f64;
        let pick = |f: fn(&Metrics) -> f64| {
            let mean = items.iter().map(f).sum::<f64>() / n;
            let var = items.iter().map(|m| (f(m) - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        let (mae, mae_sd) = pick(|m| m.mae);
        let (rmse, rmse_sd) = pick(|m| m.rmse);
        let (r2, r2_sd) = pick(|m| m.r2);
        (
            Metrics { mae, rmse, r2 },
            Metrics {
                mae: mae_sd,
                rmse: rmse_sd,
                r2: r2_sd,
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold: usize,
    /// Validation rows scored; sequence models skip rows they cannot cover.
    pub n: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    pub folds: Vec<FoldScore>,
    pub mean: Metrics,
    /// Population standard deviation over folds.
    pub std: Metrics,
    /// Validation indices of each fold, as scored.
    #[serde(skip)]
    pub partition: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub models: Vec<ModelReport>,
}

/// Relative gain of the best model over one other model, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub best: String,
    pub other: String,
    pub d_r2_pct: f64,
    pub d_mae_pct: f64,
    pub d_rmse_pct: f64,
}

/// `(R²_best − R²_other)/R²_other · 100`.
pub fn r2_gain_pct<T: Real>(best: T, other: T) -> T {
    (best - other) / other * T::of(100.0)
}

/// `(e_other − e_best)/e_other · 100` for an error metric.
pub fn error_reduction_pct<T: Real>(best: T, other: T) -> T {
    (other - best) / other * T::of(100.0)
}

impl Improvement {
    pub fn between(best: &ModelReport, other: &ModelReport) -> Self {
        Self {
            best: best.name.clone(),
            other: other.name.clone(),
            d_r2_pct: r2_gain_pct(best.mean.r2, other.mean.r2),
            d_mae_pct: error_reduction_pct(best.mean.mae, other.mean.mae),
            d_rmse_pct: error_reduction_pct(best.mean.rmse, other.mean.rmse),
        }
    }
}

fn score_fold(
    spec: &LearnerSpec,
    table: &DataTable,
    folds: &[crate::data::Fold],
    split_spec: &SplitSpec,
    k: usize,
) -> Result<(FoldScore, Vec<usize>)> {
    let fold = &folds[k];
    let run = || -> Result<(FoldScore, Vec<usize>)> {
        let model = fit_on_fold(spec, table, fold, task_seed(spec, split_spec, k))?;
        let pred = model.predict_rows(table, &fold.validation)?;
        let cov = model.coverage_rows(table, &fold.validation)?;
        let y = table.targets();
        let (mut ys, mut ps) = (Vec::new(), Vec::new());
        for ((&j, p), c) in fold.validation.iter().zip(pred).zip(cov) {
            if c {
                ys.push(y[j]);
                ps.push(p);
            }
        }
        let metrics = Metrics::score(&ys, &ps)?;
        Ok((FoldScore { fold: k, n: ys.len(), metrics }, fold.validation.clone()))
    };
    run().map_err(|e| tagged(spec, k, e))
}

fn report_for(name: String, scored: Vec<(FoldScore, Vec<usize>)>) -> ModelReport {
    let (folds, partition): (Vec<_>, Vec<_>) = scored.into_iter().unzip();
    let metrics: Vec<Metrics> = folds.iter().map(|f: &FoldScore| f.metrics).collect();
    let (mean, std) = Metrics::aggregate(&metrics);
    ModelReport {
        name,
        folds,
        mean,
        std,
        partition,
    }
}

/// K-fold scores of one learner. Each fold is fit on its training rows and
/// scored on the covered validation rows.
pub fn cross_validate(spec: &LearnerSpec, table: &DataTable, split_spec: &SplitSpec) -> Result<EvalReport> {
    compare_named(&[(spec.kind().to_string(), spec.clone())], table, split_spec)
}

/// Scores every learner on the same folds.
pub fn compare_models(specs: &[LearnerSpec], table: &DataTable, split_spec: &SplitSpec) -> Result<EvalReport> {
    let named: Vec<(String, LearnerSpec)> = specs.iter().map(|s| (s.kind().to_string(), s.clone())).collect();
    compare_named(&named, table, split_spec)
}

/// [`compare_models`] with caller-chosen report names.
pub fn compare_named(
    specs: &[(String, LearnerSpec)],
    table: &DataTable,
    split_spec: &SplitSpec,
) -> Result<EvalReport> {
    split_spec.validate()?;
    for (_, s) in specs {
        s.validate()?;
    }
    let folds = make_folds(table, split_spec)?;
    let k = folds.len();
    let tasks: Vec<(usize, usize)> = (0..specs.len()).flat_map(|i| (0..k).map(move |f| (i, f))).collect();
    let mut results: Vec<Result<(FoldScore, Vec<usize>)>> = tasks
        .par_iter()
        .map(|&(i, f)| score_fold(&specs[i].1, table, &folds, split_spec, f))
        .collect();
    let mut models = Vec::with_capacity(specs.len());
    for (name, _) in specs.iter().rev() {
        let scored = results.split_off(results.len() - k).into_iter().collect::<Result<Vec<_>>>()?;
        models.push(report_for(name.clone(), scored));
    }
    models.reverse();
    Ok(EvalReport {
        n: table.len(),
        k,
        seed: split_spec.seed,
        models,
    })
}

impl EvalReport {
    /// Index of the model with the highest mean R²; ties go to the earlier one.
    pub fn best(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, m) in self.models.iter().enumerate() {
            if best.is_none_or(|b| m.mean.r2 > self.models[b].mean.r2) {
                best = Some(i);
            }
        }
        best
    }

    /// Best model against every other model.
    pub fn improvements(&self) -> Vec<Improvement> {
        let Some(b) = self.best() else {
            return Vec::new();
        };
        self.models
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != b)
            .map(|(_, o)| Improvement::between(&self.models[b], o))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `model,fold,mae,rmse,r2`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["model", "fold", "mae", "rmse", "r2"])?;
        for m in &self.models {
            for f in &m.folds {
                w.write_record([
                    m.name.clone(),
                    f.fold.to_string(),
                    f.metrics.mae.to_string(),
                    f.metrics.rmse.to_string(),
                    f.metrics.r2.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Writes `best,other,d_r2_pct,d_mae_pct,d_rmse_pct`.
pub fn write_improvements_csv(rows: &[Improvement], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["best", "other", "d_r2_pct", "d_mae_pct", "d_rmse_pct"])?;
    for r in rows {
        w.write_record([
            r.best.clone(),
            r.other.clone(),
            r.d_r2_pct.to_string(),
            r.d_mae_pct.to_string(),
            r.d_rmse_pct.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Score on a held-out test split, reported apart from the CV aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutScore {
    pub name: String,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Metrics,
}

/// Fits on the train side of `split_spec` and scores the covered test rows.
pub fn holdout_score(name: &str, spec: &LearnerSpec, table: &DataTable, split_spec: &SplitSpec) -> Result<HoldoutScore> {
    let (train, test) = split(table, split_spec)?;
    let model = spec.fit(&train)?;
    let pred = model.predict(&test)?;
    let cov = model.coverage(&test)?;
    let (ys, ps): (Vec<f64>, Vec<f64>) = test
        .targets()
        .into_iter()
        .zip(pred)
        .zip(cov)
        .filter(|(_, c)| *c)
        .map(|(p, _)| p)
        .unzip();
    Ok(HoldoutScore {
        name: name.into(),
        n_train: train.len(),
        n_test: ys.len(),
        metrics: Metrics::score(&ys, &ps)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{KnnParams, RidgeParams};

    #[test]
    fn worked_examples() {
        assert_eq!(mae(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[0.0, 0.0], &[0.0, 2.0]).unwrap(), 2f64.sqrt());
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(), 0.5);
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn metric_errors() {
        assert!(matches!(mae::<f64>(&[], &[]), Err(Error::Empty)));
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(r2(&[2.0, 2.0], &[1.0, 2.0]), Err(Error::ConstantTarget)));
    }

    #[test]
    fn paper_improvement_figures() {
        assert!((r2_gain_pct(0.9839_f64, 0.6731) - 46.2).abs() < 0.1);
        assert!((error_reduction_pct(0.0092_f64, 0.0548) - 83.2).abs() < 0.1);
        assert!((error_reduction_pct(0.0058_f64, 0.0284) - 79.6).abs() < 0.1);
    }

    fn linear(n: usize) -> DataTable {
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, ((i * 3) % 7) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 0.5 * r[0] + r[1]).collect();
        DataTable::from_matrix(&["a", "b"], &x, &y).unwrap()
    }

    #[test]
    fn perfect_and_mean_learners() {
        let t = linear(25);
        let ridge = LearnerSpec::Ridge(RidgeParams {
            lambda: 0.0,
            fit_intercept: true,
        });
        let rep = cross_validate(&ridge, &t, &SplitSpec::cv(3)).unwrap();
        assert!(rep.models[0].folds.iter().all(|f| (f.metrics.r2 - 1.0).abs() < 1e-9));
        let mean = LearnerSpec::Knn(KnnParams { k: 20 });
        let rep = cross_validate(&mean, &t, &SplitSpec::cv(3).with_folds(5)).unwrap();
        assert!(rep.models[0].folds.iter().all(|f| f.metrics.r2 <= 0.0));
        assert_eq!(rep, cross_validate(&mean, &t, &SplitSpec::cv(3).with_folds(5)).unwrap());
    }

    #[test]
    fn duplicate_specs_tie_on_identical_folds() {
        let t = linear(30);
        let spec = LearnerSpec::default_for("gbt").unwrap();
        let rep = compare_models(&[spec.clone(), spec], &t, &SplitSpec::cv(9)).unwrap();
        assert_eq!(rep.models[0].partition, rep.models[1].partition);
        let imp = rep.improvements();
        assert_eq!(imp.len(), 1);
        assert_eq!((imp[0].d_r2_pct, imp[0].d_mae_pct, imp[0].d_rmse_pct), (0.0, 0.0, 0.0));
    }
}
