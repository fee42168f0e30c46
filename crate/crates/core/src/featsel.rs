//! Pearson correlation with significance, multicollinearity pruning and
//! heatmap export.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataTable, FeatureId};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::stats::student_t_two_sided;

pub const DEFAULT_COLLINEAR_THRESHOLD: f64 = 0.95;

/// Pearson product-moment correlation, clamped to `[−1, 1]`.
pub fn pearson<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Empty);
    }
    let n = T::of_usize(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy = sxy + da * db;
        sxx = sxx + da * da;
        syy = syy + db * db;
    }
    if sxx == T::zero() {
        return Err(Error::ConstantInput("x".into()));
    }
    if syy == T::zero() {
        return Err(Error::ConstantInput("y".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one()))
}

/// Two-sided significance of a sample correlation `r` over `n` pairs.
pub fn correlation_p_value<T: Real>(r: T, n: usize) -> T {
    if n <= 2 {
        return T::one();
    }
    let one_minus = T::one() - r * r;
    if one_minus <= T::zero() {
        return T::zero();
    }
    let t = r * T::of_usize(n - 2).sqrt() / one_minus.sqrt();
    student_t_two_sided(t, n - 2)
}

/// Pairwise correlations and p-values, `F x F` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport<T> {
    pub features: Vec<FeatureId>,
    pub r: Vec<T>,
    pub p: Vec<T>,
    pub n: usize,
}

impl<T: Real> CorrelationReport<T> {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn r_at(&self, i: usize, j: usize) -> T {
        self.r[i * self.len() + j]
    }

    pub fn p_at(&self, i: usize, j: usize) -> T {
        self.p[i * self.len() + j]
    }

    /// Correlates named columns. Pairs are computed in parallel into
    /// disjoint cells.
    pub fn from_columns(features: Vec<FeatureId>, columns: &[Vec<T>]) -> Result<Self> {
        let f = columns.len();
        if features.len() != f {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: f,
            });
        }
        let n = columns.first().map_or(0, Vec::len);
        if n < 2 {
            return Err(Error::Empty);
        }
        for (name, col) in features.iter().zip(columns) {
            if col.len() != n {
                return Err(Error::LengthMismatch { left: col.len(), right: n });
            }
            if col.iter().all(|&v| v == col[0]) {
                return Err(Error::ConstantInput(name.to_string()));
            }
        }
        let pairs: Vec<(usize, usize)> = (0..f).flat_map(|i| (i + 1..f).map(move |j| (i, j))).collect();
        let values = pairs
            .par_iter()
            .map(|&(i, j)| {
                let r = pearson(&columns[i], &columns[j])?;
                Ok((r, correlation_p_value(r, n)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut r = vec![T::zero(); f * f];
        let mut p = vec![T::zero(); f * f];
        for i in 0..f {
            r[i * f + i] = T::one();
        }
        for (&(i, j), &(rv, pv)) in pairs.iter().zip(&values) {
            r[i * f + j] = rv;
            r[j * f + i] = rv;
            p[i * f + j] = pv;
            p[j * f + i] = pv;
        }
        Ok(Self { features, r, p, n })
    }
}

/// Correlation matrix over every feature column of `table`.
pub fn correlation_matrix(table: &DataTable) -> Result<CorrelationReport<f64>> {
    let columns: Vec<Vec<f64>> = (0..table.n_features()).map(|i| table.column(i)).collect();
    CorrelationReport::from_columns(table.schema().to_vec(), &columns)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub feature: FeatureId,
    pub peer: FeatureId,
    pub abs_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResult {
    pub retained: Vec<FeatureId>,
    pub dropped: Vec<DroppedFeature>,
}

/// Greedy multicollinearity pruning.
///
/// While some retained pair has `|r| ≥ threshold`, take the pair with the
/// largest `|r|` (first in row-major order on ties) and drop whichever member
/// has the larger mean `|r|` against the other retained features; equal means
/// drop the member later in the schema.
pub fn prune_multicollinear<T: Real>(report: &CorrelationReport<T>, threshold: T) -> Result<PruneResult> {
    if !(threshold > T::zero() && threshold <= T::one()) {
        return Err(Error::InvalidConfig(format!(
            "collinearity threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let f = report.len();
    let mut alive = vec![true; f];
    let mut dropped = Vec::new();
    loop {
        let mut worst: Option<(usize, usize, T)> = None;
        for i in (0..f).filter(|&i| alive[i]) {
            for j in (i + 1..f).filter(|&j| alive[j]) {
                let a = report.r_at(i, j).abs();
                if a >= threshold && worst.is_none_or(|(_, _, w)| a > w) {
                    worst = Some((i, j, a));
                }
            }
        }
        let Some((i, j, a)) = worst else { break };
        let mean_abs = |k: usize| {
            let others: Vec<T> = (0..f)
                .filter(|&m| alive[m] && m != k)
                .map(|m| report.r_at(k, m).abs())
                .collect();
            others.iter().copied().sum::<T>() / T::of_usize(others.len())
        };
        let (drop, keep) = if mean_abs(i) > mean_abs(j) { (i, j) } else { (j, i) };
        alive[drop] = false;
        dropped.push(DroppedFeature {
            feature: report.features[drop].clone(),
            peer: report.features[keep].clone(),
            abs_r: a.to_f64().unwrap_or(f64::NAN),
        });
    }
    let retained = (0..f).filter(|&i| alive[i]).map(|i| report.features[i].clone()).collect();
    Ok(PruneResult { retained, dropped })
}

/// Long-format `feature_a,feature_b,r,p` covering the full matrix,
/// row-major in schema order.
pub fn export_heatmap(report: &CorrelationReport<f64>, path: &Path) -> Result<()> {
    let mut out = String::from("feature_a,feature_b,r,p\n");
    for (i, a) in report.features.iter().enumerate() {
        for (j, b) in report.features.iter().enumerate() {
            out.push_str(&format!("{a},{b},{},{}\n", report.r_at(i, j), report.p_at(i, j)));
        }
    }
    File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Reads a heatmap file back into a report (`n` is not stored and is 0).
pub fn read_heatmap(path: &Path) -> Result<CorrelationReport<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut cells = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad heatmap row {rec:?}")))
        };
        cells.push((rec[0].to_owned(), rec[1].to_owned(), num(2)?, num(3)?));
    }
    let f = (cells.len() as f64).sqrt().round() as usize;
    if f * f != cells.len() {
        return Err(Error::Parse(format!("{} heatmap rows is not a square", cells.len())));
    }
    let features = cells[..f].iter().map(|c| FeatureId::new(c.1.as_str())).collect();
    Ok(CorrelationReport {
        features,
        r: cells.iter().map(|c| c.2).collect(),
        p: cells.iter().map(|c| c.3).collect(),
        n: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema_of;

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        // cov = 1, var_x = var_y = 2 → 0.5
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5_f64).abs() < 1e-15);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ConstantInput(_))));
    }

    fn report_from(names: &[&str], r_upper: &[f64]) -> CorrelationReport<f64> {
        let f = names.len();
        let mut r = vec![0.0; f * f];
        let mut k = 0;
        for i in 0..f {
            r[i * f + i] = 1.0;
            for j in i + 1..f {
                r[i * f + j] = r_upper[k];
                r[j * f + i] = r_upper[k];
                k += 1;
            }
        }
        CorrelationReport {
            features: schema_of(names),
            p: vec![0.0; f * f],
            r,
            n: 10,
        }
    }

    #[test]
    fn prune_drops_feature_with_larger_mean_abs_r() {
        // A: (0.99 + 0.40)/2 = 0.695, B: (0.99 + 0.10)/2 = 0.545
        let rep = report_from(&["A", "B", "C"], &[0.99, 0.40, 0.10]);
        let out = prune_multicollinear(&rep, 0.95).unwrap();
        assert_eq!(out.retained, schema_of(&["B", "C"]));
        assert_eq!(out.dropped.len(), 1);
        assert_eq!(out.dropped[0].feature, "A");
        assert_eq!(out.dropped[0].peer, "B");
    }

    #[test]
    fn prune_tie_drops_later_feature() {
        let rep = report_from(&["A", "B"], &[1.0]);
        let out = prune_multicollinear(&rep, 0.95).unwrap();
        assert_eq!(out.retained, schema_of(&["A"]));
    }

    #[test]
    fn prune_noop_below_threshold() {
        let rep = report_from(&["A", "B", "C"], &[0.5, -0.3, 0.94]);
        let out = prune_multicollinear(&rep, 0.95).unwrap();
        assert!(out.dropped.is_empty());
        assert_eq!(out.retained.len(), 3);
    }

    #[test]
    fn prune_rejects_bad_threshold() {
        let rep = report_from(&["A", "B"], &[0.5]);
        assert!(prune_multicollinear(&rep, 0.0).is_err());
        assert!(prune_multicollinear(&rep, 1.5).is_err());
    }

    #[test]
    fn duplicated_column_is_perfectly_correlated() {
        let t = DataTable::from_matrix(
            &["a", "b", "c"],
            &[vec![1.0, 1.0, 5.0], vec![2.5, 2.5, 1.0], vec![0.3, 0.3, 2.0], vec![4.0, 4.0, 2.5]],
            &[1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        let rep = correlation_matrix(&t).unwrap();
        assert_eq!(rep.r_at(0, 1), 1.0);
        assert_eq!(rep.p_at(0, 1), 0.0);
        for i in 0..3 {
            assert_eq!(rep.r_at(i, i), 1.0);
            assert_eq!(rep.p_at(i, i), 0.0);
        }
        let pruned = prune_multicollinear(&rep, 0.95).unwrap();
        assert_eq!(pruned.dropped.len(), 1);
    }

    #[test]
    fn constant_feature_is_named() {
        let t = DataTable::from_matrix(&["a", "flat"], &[vec![1.0, 2.0], vec![2.0, 2.0]], &[1.0, 2.0]).unwrap();
        assert!(matches!(correlation_matrix(&t), Err(Error::ConstantInput(n)) if n == "flat"));
    }

    #[test]
    fn heatmap_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("heat.csv");
        let mut rep = report_from(&["f1", "f2"], &[0.5]);
        rep.p = vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 0.0];
        export_heatmap(&rep, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + 4);
        assert!(text.contains("\nf1,f2,0.5,"));
        let back = read_heatmap(&path).unwrap();
        assert_eq!(back.features, rep.features);
        for (a, b) in back.r.iter().zip(&rep.r).chain(back.p.iter().zip(&rep.p)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
