use serde::{Deserialize, Serialize};

/// Column-wise z-scoring learned from training data. Zero-variance columns
/// keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Fits on a row-major `n x p` matrix.
    pub fn fit(x: &[f64], p: usize) -> Self {
        let n = (x.len() / p.max(1)).max(1) as f64;
        let mut mean = vec![0.0; p];
        for row in x.chunks_exact(p) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for row in x.chunks_exact(p) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Self { mean, std }
    }

    pub fn fit_column(y: &[f64]) -> Self {
        Self::fit(y, 1)
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let p = self.mean.len();
        x.chunks_exact(p).flat_map(|r| self.transform_row(r)).collect()
    }

    pub fn inverse_scalar(&self, v: f64) -> f64 {
        v * self.std[0] + self.mean[0]
    }

    pub fn scalar(&self, v: f64) -> f64 {
        (v - self.mean[0]) / self.std[0]
    }
}
