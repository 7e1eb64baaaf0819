//! Dense row-major containers and the handful of small-matrix kernels the
//! rest of the crate needs.

use crate::error::{check_dim, Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("matrix buffer", rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim("matrix row", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim("matmul inner dimension", self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matvec dimension");
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Inner product with eight interleaved partial sums, so the compiler can
/// vectorize; the summation order is fixed and results are deterministic.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Row norms below this are treated as a vanishing jacobian row.
pub const RANK_TOL: f64 = 1e-9;

/// Regularized Moore-Penrose pseudo-inverse of a short, wide `l x d` matrix
/// (`l` in {1, 2}): `A^T (A A^T + reg I)^-1`, returned as a `d x l` matrix.
pub fn pinv_small(a: &Matrix, reg: f64) -> Result<Matrix> {
    let (l, d) = (a.rows(), a.cols());
    if !(1..=2).contains(&l) {
        return Err(Error::DimensionMismatch {
            what: "pseudo-inverse rows (1 or 2)",
            expected: 2,
            actual: l,
        });
    }
    for r in 0..l {
        let n = norm2(a.row(r));
        if !n.is_finite() {
            return Err(Error::NonFinite("jacobian"));
        }
        if n < RANK_TOL {
            return Err(Error::RankDeficient { norm: n });
        }
    }
    let mut out = Matrix::zeros(d, l);
    if l == 1 {
        let s = dot(a.row(0), a.row(0)) + reg;
        for j in 0..d {
            out.set(j, 0, a.get(0, j) / s);
        }
        return Ok(out);
    }
    let g00 = dot(a.row(0), a.row(0)) + reg;
    let g01 = dot(a.row(0), a.row(1));
    let g11 = dot(a.row(1), a.row(1)) + reg;
    let det = g00 * g11 - g01 * g01;
    // A nearly parallel pair of rows makes the Gram matrix singular.
    if !(det > 1e-12 * g00 * g11) {
        return Err(Error::RankDeficient {
            norm: det.max(0.0).sqrt(),
        });
    }
    let (i00, i01, i11) = (g11 / det, -g01 / det, g00 / det);
    for j in 0..d {
        let (a0, a1) = (a.get(0, j), a.get(1, j));
        out.set(j, 0, a0 * i00 + a1 * i01);
        out.set(j, 1, a0 * i01 + a1 * i11);
    }
    Ok(out)
}

/// Solve a dense square system by Gaussian elimination with partial pivoting.
/// Returns `None` for (numerically) singular systems.
pub fn solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    assert_eq!(n, b.len());
    let mut m: Vec<f64> = a.as_slice().to_vec();
    let mut rhs = b.to_vec();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            m[i * n + col]
                .abs()
                .partial_cmp(&m[j * n + col].abs())
                .unwrap()
        })?;
        if m[piv * n + col].abs() <= 1e-12 * scale {
            return None;
        }
        if piv != col {
            for c in 0..n {
                m.swap(piv * n + c, col * n + c);
            }
            rhs.swap(piv, col);
        }
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[r * n + c] -= f * m[col * n + c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = rhs[r];
        for c in r + 1..n {
            s -= m[r * n + c] * x[c];
        }
        x[r] = s / m[r * n + r];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_single_row_is_scaled_transpose() {
        let a = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let p = pinv_small(&a, 0.0).unwrap();
        assert!((p.get(0, 0) - 0.12).abs() < 1e-15);
        assert!((p.get(1, 0) - 0.16).abs() < 1e-15);
    }

    #[test]
    fn pinv_of_orthonormal_rows_is_transpose() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let p = pinv_small(&a, 0.0).unwrap();
        assert_eq!(p, a.transpose());
    }

    #[test]
    fn pinv_flags_vanishing_rows() {
        let a = Matrix::from_rows(&[vec![1e-12, 0.0]]).unwrap();
        assert!(matches!(pinv_small(&a, 0.0), Err(Error::RankDeficient { .. })));
        let par = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(pinv_small(&par, 0.0), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn solve_small_system() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = solve(&a, &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        let s = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(solve(&s, &[1.0, 1.0]).is_none());
    }
}
