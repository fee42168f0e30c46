//! Model-agnostic explanations: sampled Shapley attributions, importance
//! shares, partial dependence grids and actual-vs-predicted histograms.

use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataTable, FeatureId};
use crate::error::{Error, Result};
use crate::learners::Regressor;
use crate::scalar::Real;
use crate::seed;

pub const DEFAULT_BACKGROUND_ROWS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub features: Vec<FeatureId>,
    /// Mean model output over the background rows.
    pub base_value: f64,
    /// Row-major `n x F` attributions.
    pub phi: Vec<f64>,
    /// Row index of each explained instance in the instance table.
    pub instances: Vec<usize>,
    /// Model output for each instance.
    pub predictions: Vec<f64>,
    pub samples_per_instance: usize,
    pub seed: u64,
}

impl ShapMatrix {
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let f = self.n_features();
        &self.phi[j * f..(j + 1) * f]
    }

    /// Largest `|base + Σφ − f(x)|` over instances.
    pub fn efficiency_error(&self) -> f64 {
        (0..self.instances.len())
            .map(|j| (self.base_value + self.row(j).iter().sum::<f64>() - self.predictions[j]).abs())
            .fold(0.0, f64::max)
    }

    /// Writes `row_id,feature,phi` in long format.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["row_id", "feature", "phi"])?;
        for (j, &row) in self.instances.iter().enumerate() {
            for (f, v) in self.features.iter().zip(self.row(j)) {
                w.write_record([row.to_string(), f.to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn summary(&self) -> ShapSummary {
        ShapSummary {
            base_value: self.base_value,
            instances: self.instances.len(),
            samples_per_instance: self.samples_per_instance,
            seed: self.seed,
            max_efficiency_error: self.efficiency_error(),
            importance: importance(self),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    pub base_value: f64,
    pub instances: usize,
    pub samples_per_instance: usize,
    pub seed: u64,
    pub max_efficiency_error: f64,
    pub importance: ImportanceTable,
}

/// Up to [`DEFAULT_BACKGROUND_ROWS`] rows of `table`, drawn by `seed` and kept
/// in table order.
pub fn default_background(table: &DataTable, seed: u64) -> DataTable {
    let n = table.len();
    if n <= DEFAULT_BACKGROUND_ROWS {
        return table.clone();
    }
    let mut idx = sample(&mut seed::rng(seed), n, DEFAULT_BACKGROUND_ROWS).into_vec();
    idx.sort_unstable();
    table.select(&idx)
}

/// Permutation-sampling Shapley values for every row of `instances`, with
/// absent features drawn from the rows of `background`.
///
/// Each sample draws a feature ordering and a background row, then switches
/// features from the background row to the instance one at a time in that
/// order, crediting each feature with the change in output. Background rows
/// are visited in reshuffled full passes so every row is used equally often.
/// The leftover `f(x) − base − Σφ` is finally split evenly across features.
pub fn shap_sample<M: Regressor + ?Sized>(
    model: &M,
    instances: &DataTable,
    background: &DataTable,
    samples: usize,
    seed: u64,
) -> Result<ShapMatrix> {
    if background.is_empty() {
        return Err(Error::EmptyTable);
    }
    instances.check_schema(background.schema())?;
    let bg_pred = model.predict(background)?;
    let rows: Vec<usize> = (0..instances.len()).collect();
    let bg: Vec<&[f64]> = background.rows().iter().map(|r| r.features.as_slice()).collect();
    shap_core(model, instances, &rows, &bg, &bg_pred, samples, seed)
}

/// [`shap_sample`] for `rows` of `table`, with the background also drawn from
/// `table`. Sequence models see each instance and background row in its own
/// cell history.
pub fn shap_rows<M: Regressor + ?Sized>(
    model: &M,
    table: &DataTable,
    rows: &[usize],
    background_rows: &[usize],
    samples: usize,
    seed: u64,
) -> Result<ShapMatrix> {
    if background_rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let bg_pred = model.predict_rows(table, background_rows)?;
    let bg: Vec<&[f64]> = background_rows.iter().map(|&i| table.rows()[i].features.as_slice()).collect();
    shap_core(model, table, rows, &bg, &bg_pred, samples, seed)
}

fn shap_core<M: Regressor + ?Sized>(
    model: &M,
    table: &DataTable,
    rows: &[usize],
    background: &[&[f64]],
    bg_pred: &[f64],
    samples: usize,
    seed: u64,
) -> Result<ShapMatrix> {
    if samples < 1 {
        return Err(Error::InvalidConfig("shap samples must be >= 1".into()));
    }
    let nf = table.n_features();
    let base_value = bg_pred.iter().sum::<f64>() / bg_pred.len() as f64;

    let per_instance: Vec<Result<(Vec<f64>, f64)>> = rows
        .par_iter()
        .map(|&j| {
            let mut rng = seed::rng(seed::derive(seed, &[j as u64]));
            let x = &table.rows()[j].features;
            let mut order: Vec<usize> = (0..background.len()).collect();
            let mut perms = Vec::with_capacity(samples);
            let mut candidates = Vec::with_capacity(samples * (nf + 1) + 1);
            for s in 0..samples {
                if s % order.len() == 0 {
                    order.shuffle(&mut rng);
                }
                let mut z = background[order[s % order.len()]].to_vec();
                let mut perm: Vec<usize> = (0..nf).collect();
                perm.shuffle(&mut rng);
                candidates.push(z.clone());
                for &f in &perm {
                    z[f] = x[f];
                    candidates.push(z.clone());
                }
                perms.push(perm);
            }
            candidates.push(x.clone());
            let out = model.predict_in_context(table, j, &candidates)?;
            let fx = out[out.len() - 1];
            let mut phi = vec![0.0; nf];
            for (s, perm) in perms.iter().enumerate() {
                let v = &out[s * (nf + 1)..(s + 1) * (nf + 1)];
                for (k, &f) in perm.iter().enumerate() {
                    phi[f] += v[k + 1] - v[k];
                }
            }
            phi.iter_mut().for_each(|p| *p /= samples as f64);
            let residual = (fx - base_value - phi.iter().sum::<f64>()) / nf.max(1) as f64;
            phi.iter_mut().for_each(|p| *p += residual);
            Ok((phi, fx))
        })
        .collect();

    let mut phi = Vec::with_capacity(rows.len() * nf);
    let mut predictions = Vec::with_capacity(rows.len());
    for r in per_instance {
        let (p, fx) = r?;
        phi.extend(p);
        predictions.push(fx);
    }
    Ok(ShapMatrix {
        features: table.schema().to_vec(),
        base_value,
        phi,
        instances: rows.to_vec(),
        predictions,
        samples_per_instance: samples,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: FeatureId,
    pub mean_abs_phi: f64,
    pub share: f64,
}

/// Features by descending share of total mean `|φ|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub entries: Vec<ImportanceEntry>,
    /// Every attribution was zero; shares are uniform.
    pub all_zero: bool,
}

pub fn importance(shap: &ShapMatrix) -> ImportanceTable {
    let nf = shap.n_features();
    let n = shap.instances.len().max(1) as f64;
    let mut mean_abs = vec![0.0; nf];
    for row in shap.phi.chunks_exact(nf.max(1)) {
        for (m, v) in mean_abs.iter_mut().zip(row) {
            *m += v.abs() / n;
        }
    }
    let total: f64 = mean_abs.iter().sum();
    let all_zero = !(total > 0.0);
    let mut entries: Vec<ImportanceEntry> = shap
        .features
        .iter()
        .zip(&mean_abs)
        .map(|(f, &m)| ImportanceEntry {
            feature: f.clone(),
            mean_abs_phi: m,
            share: if all_zero { 1.0 / nf as f64 } else { m / total },
        })
        .collect();
    entries.sort_by(|a, b| b.share.total_cmp(&a.share));
    ImportanceTable { entries, all_zero }
}

impl ImportanceTable {
    /// Writes `feature,mean_abs_phi,share`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["feature", "mean_abs_phi", "share"])?;
        for e in &self.entries {
            w.write_record([e.feature.to_string(), e.mean_abs_phi.to_string(), e.share.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Partial dependence over one or two features. `values` is row-major with
/// the first axis varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpGrid {
    pub features: Vec<FeatureId>,
    pub axes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

fn axis(col: &[f64], resolution: usize, name: &str) -> Result<Vec<f64>> {
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::ConstantInput(name.into()));
    }
    let step = (hi - lo) / (resolution - 1) as f64;
    Ok((0..resolution)
        .map(|k| if k + 1 == resolution { hi } else { lo + step * k as f64 })
        .collect())
}

/// Mean prediction over all rows of `table` with `features` pinned to each
/// grid point. A single resolution applies to every axis.
pub fn pdp<M: Regressor + ?Sized>(
    model: &M,
    table: &DataTable,
    features: &[&str],
    resolution: &[usize],
) -> Result<PdpGrid> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    if !(1..=2).contains(&features.len()) {
        return Err(Error::InvalidConfig(format!(
            "partial dependence takes 1 or 2 features, got {}",
            features.len()
        )));
    }
    let res: Vec<usize> = match resolution {
        [r] => vec![*r; features.len()],
        r if r.len() == features.len() => r.to_vec(),
        _ => {
            return Err(Error::InvalidConfig(
                "give one resolution or one per feature".into(),
            ))
        }
    };
    if res.iter().any(|&r| r < 2) {
        return Err(Error::InvalidConfig("pdp resolution must be >= 2".into()));
    }
    let idx = features
        .iter()
        .map(|&f| {
            table.feature_index(f).ok_or_else(|| Error::SchemaMismatch {
                expected: table.schema_names(),
                found: vec![f.to_string()],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if idx.len() == 2 && idx[0] == idx[1] {
        return Err(Error::InvalidConfig("pdp features must differ".into()));
    }
    let axes = idx
        .iter()
        .zip(&res)
        .zip(features)
        .map(|((&i, &r), f)| axis(&table.column(i), r, f))
        .collect::<Result<Vec<_>>>()?;

    let points: Vec<Vec<f64>> = match axes.as_slice() {
        [a] => a.iter().map(|&v| vec![v]).collect(),
        [a, b] => a.iter().flat_map(|&u| b.iter().map(move |&v| vec![u, v])).collect(),
        _ => unreachable!(),
    };
    let n = table.len();
    let values = points
        .par_iter()
        .map(|pt| {
            let mut t = table.clone();
            for (&i, &v) in idx.iter().zip(pt) {
                t = t.with_column(i, &vec![v; n]);
            }
            Ok(model.predict(&t)?.iter().sum::<f64>() / n as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PdpGrid {
        features: features.iter().map(|&f| FeatureId::new(f)).collect(),
        axes,
        values,
    })
}

impl PdpGrid {
    /// Writes `x1[,x2],value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        if self.axes.len() == 1 {
            w.write_record(["x1", "value"])?;
            for (x, v) in self.axes[0].iter().zip(&self.values) {
                w.write_record([x.to_string(), v.to_string()])?;
            }
        } else {
            w.write_record(["x1", "x2", "value"])?;
            let m = self.axes[1].len();
            for (k, v) in self.values.iter().enumerate() {
                w.write_record([
                    self.axes[0][k / m].to_string(),
                    self.axes[1][k % m].to_string(),
                    v.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Joint histogram of actual (rows) against predicted (columns) values on a
/// shared range, so equal values land on the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualHist<T> {
    pub actual_edges: Vec<T>,
    pub predicted_edges: Vec<T>,
    /// Row-major `bins x bins`.
    pub counts: Vec<usize>,
}

fn bin_of<T: Real>(v: T, lo: T, width: T, bins: usize) -> usize {
    ((v - lo) / width).floor().to_usize().unwrap_or(0).min(bins - 1)
}

pub fn residual_hist<T: Real>(y: &[T], yhat: &[T], bins: usize) -> Result<ResidualHist<T>> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty);
    }
    if bins < 1 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    let all = y.iter().chain(yhat);
    let mut lo = all.clone().copied().fold(T::infinity(), T::min);
    let mut hi = all.copied().fold(T::neg_infinity(), T::max);
    if !(hi > lo) {
        let pad = T::of(0.5).max(lo.abs() * T::of(1e-6));
        lo = lo - pad;
        hi = hi + pad;
    }
    let width = (hi - lo) / T::of_usize(bins);
    let edges: Vec<T> = (0..=bins)
        .map(|k| if k == bins { hi } else { lo + width * T::of_usize(k) })
        .collect();
    let mut counts = vec![0; bins * bins];
    for (&a, &p) in y.iter().zip(yhat) {
        counts[bin_of(a, lo, width, bins) * bins + bin_of(p, lo, width, bins)] += 1;
    }
    Ok(ResidualHist {
        actual_edges: edges.clone(),
        predicted_edges: edges,
        counts,
    })
}

impl<T: Real> ResidualHist<T> {
    pub fn bins(&self) -> usize {
        self.actual_edges.len() - 1
    }

    pub fn count(&self, actual_bin: usize, predicted_bin: usize) -> usize {
        self.counts[actual_bin * self.bins() + predicted_bin]
    }

    /// Writes `actual_bin_lo,actual_bin_hi,predicted_bin_lo,predicted_bin_hi,count`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["actual_bin_lo", "actual_bin_hi", "predicted_bin_lo", "predicted_bin_hi", "count"])?;
        let b = self.bins();
        for i in 0..b {
            for j in 0..b {
                w.write_record([
                    self.actual_edges[i].to_string(),
                    self.actual_edges[i + 1].to_string(),
                    self.predicted_edges[j].to_string(),
                    self.predicted_edges[j + 1].to_string(),
                    self.count(i, j).to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Ridge, RidgeParams};
    use crate::linalg::RidgeSolution;

    fn linear_model(coef: Vec<f64>, intercept: f64, names: &[&str]) -> Ridge {
        Ridge::from_solution(
            RidgeParams::default(),
            crate::data::schema_of(names),
            RidgeSolution { coef, intercept },
        )
    }

    fn grid_table(n: usize) -> DataTable {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![(i % 10) as f64 * 0.3, ((i * 7) % 13) as f64 - 4.0])
            .collect();
        let y = vec![0.0; n];
        DataTable::from_matrix(&["x1", "x2"], &x, &y).unwrap()
    }

    #[test]
    fn constant_model_has_zero_attributions() {
        let t = grid_table(20);
        let m = linear_model(vec![0.0, 0.0], 1.5, &["x1", "x2"]);
        let s = shap_sample(&m, &t, &t, 16, 3).unwrap();
        assert!(s.phi.iter().all(|&p| p.abs() < 1e-12));
        assert_eq!(s.base_value, 1.5);
        assert!(importance(&s).all_zero);
    }

    #[test]
    fn linear_attributions_and_efficiency() {
        let t = grid_table(40);
        let m = linear_model(vec![3.0, 0.0], 0.25, &["x1", "x2"]);
        let s = shap_sample(&m, &t, &t, 200, 9).unwrap();
        let mu: f64 = t.column(0).iter().sum::<f64>() / 40.0;
        for j in 0..40 {
            let want = 3.0 * (t.rows()[j].features[0] - mu);
            assert!((s.row(j)[0] - want).abs() < 1e-9);
            assert!(s.row(j)[1].abs() < 1e-9);
        }
        assert!(s.efficiency_error() < 1e-9);
        assert_eq!(s, shap_sample(&m, &t, &t, 200, 9).unwrap());
    }

    #[test]
    fn single_feature_takes_all_importance() {
        let t = grid_table(30);
        let m = linear_model(vec![0.0, 2.0], 0.0, &["x1", "x2"]);
        let imp = importance(&shap_sample(&m, &t, &t, 30, 1).unwrap());
        assert_eq!(imp.entries[0].feature, "x2");
        assert!((imp.entries[0].share - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pdp_of_linear_model() {
        let t = grid_table(25);
        let m = linear_model(vec![2.0, 1.0], 0.0, &["x1", "x2"]);
        let g = pdp(&m, &t, &["x1"], &[6]).unwrap();
        let mean2: f64 = t.column(1).iter().sum::<f64>() / 25.0;
        for (x, v) in g.axes[0].iter().zip(&g.values) {
            assert!((v - (2.0 * x + mean2)).abs() < 1e-9);
        }
        assert_eq!(g.axes[0].first(), Some(&0.0));
        assert_eq!(g.axes[0].last(), Some(&(9.0 * 0.3)));
        let g2 = pdp(&m, &t, &["x1", "x2"], &[5, 7]).unwrap();
        assert_eq!(g2.values.len(), 35);
        assert!(matches!(pdp(&m, &t, &["nope"], &[3]), Err(Error::SchemaMismatch { .. })));
    }

    #[test]
    fn residual_hist_worked_example() {
        let h = residual_hist(&[0.0, 1.0], &[1.0, 0.0], 2).unwrap();
        assert_eq!(h.counts, vec![0, 1, 1, 0]);
        assert_eq!(h.actual_edges, vec![0.0, 0.5, 1.0]);
        let y = [0.1, 0.4, 0.4, 0.9, 2.0];
        let d = residual_hist(&y, &y, 4).unwrap();
        assert_eq!(d.counts.iter().sum::<usize>(), 5);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(d.count(i, j), 0);
                }
            }
        }
        let c = residual_hist(&[1.0f32; 3], &[1.0f32; 3], 3).unwrap();
        assert_eq!(c.counts.iter().sum::<usize>(), 3);
    }
}
