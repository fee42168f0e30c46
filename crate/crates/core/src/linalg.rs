//! Dense symmetric positive-definite solves for the ridge normal equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lower-triangular Cholesky factor of a row-major `n x n` SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    lower: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factors `a`. A pivot at or below `64 * eps * max(diag)` is treated as
    /// rank deficiency and reported as [`Error::SingularSystem`].
    pub fn factor(a: &[T], n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::LengthMismatch {
                left: a.len(),
                right: n * n,
            });
        }
        let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(T::zero(), T::max);
        let tol = T::of(64.0) * T::epsilon() * max_diag.max(T::min_positive_value());
        let mut lower = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d = d - lower[j * n + k] * lower[j * n + k];
            }
            if !(d > tol) {
                return Err(Error::SingularSystem);
            }
            let d = d.sqrt();
            lower[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s = s - lower[i * n + k] * lower[j * n + k];
                }
                lower[i * n + j] = s / d;
            }
        }
        Ok(Self { n, lower })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let l = &self.lower;
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s = s - l[i * n + k] * z[k];
            }
            z[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s = s - l[k * n + i] * z[k];
            }
            z[i] = s / l[i * n + i];
        }
        z
    }
}

/// Coefficients and intercept of a ridge fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeSolution<T> {
    pub coef: Vec<T>,
    pub intercept: T,
}

impl<T: Real> RidgeSolution<T> {
    pub fn predict_row(&self, row: &[T]) -> T {
        self.coef
            .iter()
            .zip(row)
            .fold(self.intercept, |acc, (&b, &x)| acc + b * x)
    }
}

/// Solves `(XᵀX + λI) β = Xᵀy` for row-major `x` (`n x p`).
///
/// With `fit_intercept`, columns and target are centered first and the
/// intercept is recovered as `ȳ − x̄ᵀβ`; the intercept is never penalized.
pub fn ridge_solve<T: Real>(
    x: &[T],
    n: usize,
    p: usize,
    y: &[T],
    lambda: T,
    fit_intercept: bool,
) -> Result<RidgeSolution<T>> {
    if n == 0 || p == 0 {
        return Err(Error::Empty);
    }
    if x.len() != n * p {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: n * p,
        });
    }
    if y.len() != n {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: n,
        });
    }
    if !lambda.is_finite() || lambda < T::zero() {
        return Err(Error::InvalidConfig(format!(
            "ridge lambda must be finite and >= 0, got {lambda}"
        )));
    }
    let nf = T::of_usize(n);
    let (x_mean, y_mean) = if fit_intercept {
        let mut xm = vec![T::zero(); p];
        for row in x.chunks_exact(p) {
            for (m, &v) in xm.iter_mut().zip(row) {
                *m = *m + v;
            }
        }
        xm.iter_mut().for_each(|m| *m = *m / nf);
        (xm, y.iter().copied().sum::<T>() / nf)
    } else {
        (vec![T::zero(); p], T::zero())
    };

    let mut gram = vec![T::zero(); p * p];
    let mut rhs = vec![T::zero(); p];
    let mut centered = vec![T::zero(); p];
    for (row, &yi) in x.chunks_exact(p).zip(y) {
        for (c, (&v, &m)) in centered.iter_mut().zip(row.iter().zip(&x_mean)) {
            *c = v - m;
        }
        let yc = yi - y_mean;
        for a in 0..p {
            rhs[a] = rhs[a] + centered[a] * yc;
            for b in a..p {
                gram[a * p + b] = gram[a * p + b] + centered[a] * centered[b];
            }
        }
    }
    for a in 0..p {
        gram[a * p + a] = gram[a * p + a] + lambda;
        for b in 0..a {
            gram[a * p + b] = gram[b * p + a];
        }
    }
    let coef = Cholesky::factor(&gram, p)?.solve(&rhs);
    let intercept = if fit_intercept {
        y_mean
            - coef
                .iter()
                .zip(&x_mean)
                .fold(T::zero(), |acc, (&b, &m)| acc + b * m)
    } else {
        T::zero()
    };
    Ok(RidgeSolution { coef, intercept })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_small_spd() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = Cholesky::factor(&a, 2).unwrap().solve(&[2.0, 1.0]);
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0_f64).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0_f64).abs() < 1e-14);
    }

    #[test]
    fn duplicate_columns_without_penalty_are_singular() {
        let x = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        let y = [1.0, 2.0, 3.0];
        assert!(matches!(
            ridge_solve(&x, 3, 2, &y, 0.0, true),
            Err(Error::SingularSystem)
        ));
        assert!(ridge_solve(&x, 3, 2, &y, 0.1, true).is_ok());
    }

    #[test]
    fn closed_form_single_feature() {
        // Σxy / (Σx² + λ) = 4 / (2 + 1)
        let sol = ridge_solve(&[-1.0, 0.0, 1.0], 3, 1, &[-2.0, 0.0, 2.0], 1.0, true).unwrap();
        assert!((sol.coef[0] - 4.0 / 3.0_f64).abs() < 1e-14);
        assert!(sol.intercept.abs() < 1e-14);
    }

    #[test]
    fn runs_in_single_precision() {
        let sol = ridge_solve(&[1.0f32, 2.0, 3.0], 3, 1, &[2.0, 4.0, 6.0], 0.0, true).unwrap();
        assert!((sol.coef[0] - 2.0).abs() < 1e-5);
    }
}
