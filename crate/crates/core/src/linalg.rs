//! Dense symmetric positive-definite routines (row-major storage).

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Cholesky {
    /// Factors the symmetric matrix `a` (only the lower triangle is read).
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix must be n x n");
        let mut lower = vec![0.0; n * n];
        let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
        for j in 0..n {
            let row_j = &lower[j * n..j * n + j];
            let s = a[j * n + j] - dot(row_j, row_j);
            if !(s > 0.0) || !s.is_finite() {
                let cond = if dmin.is_finite() && dmin > 0.0 {
                    (dmax / dmin).powi(2)
                } else {
                    f64::INFINITY
                };
                return Err(Error::Numeric(format!(
                    "matrix is not positive definite at pivot {j} (pivot {s:.3e}, condition estimate >= {cond:.3e})"
                )));
            }
            let d = s.sqrt();
            dmin = dmin.min(d);
            dmax = dmax.max(d);
            lower[j * n + j] = d;
            for i in (j + 1)..n {
                let (head, tail) = lower.split_at_mut(i * n);
                let row_j = &head[j * n..j * n + j];
                let row_i = &mut tail[..n];
                row_i[j] = (a[i * n + j] - dot(&row_i[..j], row_j)) / d;
            }
        }
        Ok(Cholesky { n, lower })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Crude condition-number estimate from the factor's diagonal.
    pub fn condition_estimate(&self) -> f64 {
        let diag = (0..self.n).map(|i| self.lower[i * self.n + i]);
        let (lo, hi) = diag.fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
        (hi / lo).powi(2)
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let l = &self.lower;
        for i in 0..n {
            let s = b[i] - dot(&l[i * n..i * n + i], &b[..i]);
            b[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
    }

    /// Full inverse `A⁻¹`, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let l = &self.lower;
        // Row j of `inv_t` holds column j of L⁻¹ (zero before position j).
        let inv_t: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut col = vec![0.0; n];
                col[j] = 1.0 / l[j * n + j];
                for i in (j + 1)..n {
                    let s = dot(&l[i * n + j..i * n + i], &col[j..i]);
                    col[i] = -s / l[i * n + i];
                }
                col
            })
            .collect();
        // A⁻¹ = L⁻ᵀ L⁻¹, entry (i, j) sums over k >= max(i, j).
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i..n)
                    .map(|j| dot(&inv_t[i][j..], &inv_t[j][j..]))
                    .collect()
            })
            .collect();
        let mut out = vec![0.0; n * n];
        for (i, row) in upper.iter().enumerate() {
            for (off, &v) in row.iter().enumerate() {
                let j = i + off;
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }
}

/// Solves the SPD system `a x = b`.
pub fn solve_spd(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let chol = Cholesky::factor(a, b.len())?;
    let mut x = b.to_vec();
    chol.solve_in_place(&mut x);
    Ok(x)
}
