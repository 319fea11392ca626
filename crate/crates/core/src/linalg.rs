//! Small dense least-squares kernels used by the forecasting models.

use crate::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    fn get_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Outcome of a least-squares solve.
pub(crate) enum LstSq {
    Solved(Vec<f64>),
    /// The first column whose Householder pivot fell below tolerance.
    RankDeficient(usize),
}

/// Least squares via Householder QR. Weights, when given, scale each row by
/// `sqrt(w_i)`.
pub(crate) fn lstsq_qr(x: &Matrix, y: &[f64], weights: Option<&[f64]>) -> LstSq {
    let (m, n) = (x.rows, x.cols);
    let mut a = x.clone();
    let mut b = y.to_vec();
    if let Some(w) = weights {
        for i in 0..m {
            let s = w[i].sqrt();
            for j in 0..n {
                *a.get_mut(i, j) *= s;
            }
            b[i] *= s;
        }
    }
    if m < n {
        return LstSq::RankDeficient(m);
    }

    let col_norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| a.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    let scale = col_norms.iter().cloned().fold(0.0, f64::max).max(1.0);
    let tol = 1e-10 * scale;

    for k in 0..n {
        let norm = (k..m).map(|i| a.get(i, k).powi(2)).sum::<f64>().sqrt();
        if norm <= tol.max(1e-10 * col_norms[k]) {
            return LstSq::RankDeficient(k);
        }
        let alpha = if a.get(k, k) > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| a.get(i, k)).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..n {
            let dot: f64 = (k..m).map(|i| v[i - k] * a.get(i, j)).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                *a.get_mut(i, j) -= f * v[i - k];
            }
        }
        let dot: f64 = (k..m).map(|i| v[i - k] * b[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in k..m {
            b[i] -= f * v[i - k];
        }
        if a.get(k, k).abs() <= tol {
            return LstSq::RankDeficient(k);
        }
    }

    let mut beta = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = ((k + 1)..n).map(|j| a.get(k, j) * beta[j]).sum();
        beta[k] = (b[k] - s) / a.get(k, k);
    }
    LstSq::Solved(beta)
}

/// Solves `(XᵀX + κ·I) β = Xᵀy` by Cholesky factorisation, where
/// `κ = penalty · mean(diag XᵀX)` so the penalty is relative to the data scale.
pub(crate) fn ridge(x: &Matrix, y: &[f64], penalty: f64) -> Result<Vec<f64>> {
    let n = x.cols;
    let mut g = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for r in 0..x.rows {
        let row = x.row(r);
        for i in 0..n {
            rhs[i] += row[i] * y[r];
            for j in 0..=i {
                g[i * n + j] += row[i] * row[j];
            }
        }
    }
    let scale = (0..n).map(|i| g[i * n + i]).sum::<f64>() / n.max(1) as f64;
    let kappa = penalty * if scale > 0.0 { scale } else { 1.0 };
    for i in 0..n {
        g[i * n + i] += kappa;
        for j in 0..i {
            g[j * n + i] = g[i * n + j];
        }
    }
    solve_spd(&mut g, &mut rhs, n)?;
    Ok(rhs)
}

/// In-place Cholesky solve of a symmetric positive definite system.
pub(crate) fn solve_spd(g: &mut [f64], rhs: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = g[j * n + j];
        for k in 0..j {
            d -= g[j * n + k].powi(2);
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::Numerical(format!(
                "matrix not positive definite at pivot {j}"
            )));
        }
        let d = d.sqrt();
        g[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = g[i * n + j];
            for k in 0..j {
                s -= g[i * n + k] * g[j * n + k];
            }
            g[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s -= g[i * n + k] * rhs[k];
        }
        rhs[i] = s / g[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for k in (i + 1)..n {
            s -= g[k * n + i] * rhs[k];
        }
        rhs[i] = s / g[i * n + i];
    }
    Ok(())
}

/// Solves the square system `A x = b` by Gaussian elimination with partial
/// pivoting. Returns `None` when `A` is numerically singular.
pub(crate) fn solve_square(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(col, piv);
        for r in (col + 1)..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    Some(x)
}
