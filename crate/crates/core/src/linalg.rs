//! Small dense matrix and vector helpers.
//!
//! Everything here targets the problem sizes of this crate (a handful of
//! resources and classes), so the implementations favor determinism and
//! clarity over asymptotics.

use serde::{Deserialize, Serialize};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Mat { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `self * x` for a column vector `x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `self^T * x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "tr_matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = self.row(i);
            for j in 0..self.cols {
                out[j] += row[j] * x[i];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Scales column `j` of a copy of `self` by `d[j]` (i.e. `self * diag(d)`).
    pub fn scale_cols(&self, d: &[f64]) -> Mat {
        assert_eq!(d.len(), self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[i * self.cols + j] *= d[j];
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn scale(x: &[f64], a: f64) -> Vec<f64> {
    x.iter().map(|v| v * a).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Componentwise product.
pub fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Basis of the null space of `a`, computed by Gaussian elimination with
/// partial pivoting. One basis vector per free column, in ascending column
/// order, so the output is deterministic for a fixed input.
pub fn nullspace_basis(a: &Mat, tol: f64) -> Vec<Vec<f64>> {
    let (m, n) = (a.rows(), a.cols());
    let mut r = a.clone();
    let mut pivot_cols = Vec::new();
    let mut row = 0usize;
    for col in 0..n {
        if row >= m {
            break;
        }
        let (best_row, best_val) = (row..m)
            .map(|i| (i, r.get(i, col).abs()))
            .fold((row, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best_val <= tol {
            continue;
        }
        if best_row != row {
            for j in 0..n {
                let tmp = r.get(row, j);
                r.set(row, j, r.get(best_row, j));
                r.set(best_row, j, tmp);
            }
        }
        let piv = r.get(row, col);
        for j in 0..n {
            let v = r.get(row, j) / piv;
            r.set(row, j, v);
        }
        for i in 0..m {
            if i == row {
                continue;
            }
            let f = r.get(i, col);
            if f != 0.0 {
                for j in 0..n {
                    let v = r.get(i, j) - f * r.get(row, j);
                    r.set(i, j, v);
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
    }
    let is_pivot: Vec<bool> = {
        let mut v = vec![false; n];
        for &c in &pivot_cols {
            v[c] = true;
        }
        v
    };
    let mut basis = Vec::new();
    for free in 0..n {
        if is_pivot[free] {
            continue;
        }
        let mut v = vec![0.0; n];
        v[free] = 1.0;
        for (rank, &pc) in pivot_cols.iter().enumerate() {
            v[pc] = -r.get(rank, free);
        }
        basis.push(v);
    }
    basis
}

/// Modified Gram-Schmidt. Vectors that collapse below `tol` after projection
/// are dropped, so the result is an orthonormal set spanning the input.
pub fn gram_schmidt(vectors: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for u in &out {
            let c = dot(&w, u);
            axpy(&mut w, -c, u);
        }
        // second pass for numerical orthogonality
        for u in &out {
            let c = dot(&w, u);
            axpy(&mut w, -c, u);
        }
        let n = norm2(&w);
        if n > tol {
            out.push(scale(&w, 1.0 / n));
        }
    }
    out
}

/// Cholesky-style factor `L` (lower triangular, `L L^T = a`) for a symmetric
/// positive semidefinite matrix. Zero pivots within `tol` produce zero
/// columns; a pivot below `-tol` means the matrix is not PSD.
pub fn psd_factor(a: &Mat, tol: f64) -> Result<Mat, String> {
    let n = a.rows();
    if a.cols() != n {
        return Err("matrix not square".into());
    }
    let scale_ref = a.frobenius_norm().max(1.0);
    for i in 0..n {
        for j in 0..n {
            if (a.get(i, j) - a.get(j, i)).abs() > tol * scale_ref {
                return Err(format!("matrix not symmetric at ({i},{j})"));
            }
        }
    }
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d < -tol * scale_ref {
            return Err(format!("matrix not PSD: pivot {d} at column {j}"));
        }
        if d <= tol * scale_ref {
            // semidefinite direction: leave the column zero
            continue;
        }
        let dj = d.sqrt();
        l.set(j, j, dj);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / dj);
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_transpose() {
        let k = Mat::from_rows(vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]);
        assert_eq!(k.matvec(&[1.0, 2.0, 3.0]), vec![4.0, 5.0]);
        assert_eq!(k.tr_matvec(&[1.0, 2.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(k.transpose().matvec(&[1.0, 2.0]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn nullspace_of_two_link_network() {
        let k = Mat::from_rows(vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]);
        let basis = nullspace_basis(&k, 1e-12);
        assert_eq!(basis.len(), 1);
        let v = &basis[0];
        // one free column (index 2) gives (-1, -1, 1)
        assert_eq!(v, &vec![-1.0, -1.0, 1.0]);
        let kv = k.matvec(v);
        assert!(kv.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn nullspace_of_invertible_matrix_is_empty() {
        let k = Mat::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(nullspace_basis(&k, 1e-12).is_empty());
    }

    #[test]
    fn gram_schmidt_orthonormalizes_and_drops_dependents() {
        let vs = vec![
            vec![1.0, 1.0, 0.0],
            vec![2.0, 2.0, 0.0],
            vec![1.0, 0.0, 1.0],
        ];
        let q = gram_schmidt(&vs, 1e-10);
        assert_eq!(q.len(), 2);
        for (i, a) in q.iter().enumerate() {
            for (j, b) in q.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot(a, b) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn psd_factor_reconstructs() {
        let sigma = Mat::from_rows(vec![vec![4.0, 2.0], vec![2.0, 4.0]]);
        let l = psd_factor(&sigma, 1e-12).unwrap();
        let back = l.matmul(&l.transpose());
        for i in 0..2 {
            for j in 0..2 {
                assert!((back.get(i, j) - sigma.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn psd_factor_handles_zero_and_rejects_indefinite() {
        let zero = Mat::zeros(2, 2);
        let l = psd_factor(&zero, 1e-12).unwrap();
        assert_eq!(l, Mat::zeros(2, 2));
        let bad = Mat::from_rows(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(psd_factor(&bad, 1e-12).is_err());
    }
}
