//! Small dense linear algebra: a row-major matrix and a column-pivoted
//! Householder QR used for every least-squares solve in the crate.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, ModelLabel, Result};

/// Designs whose estimated condition number exceeds this are rejected.
pub const CONDITION_LIMIT: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix storage",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "matrix row",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// New matrix holding the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, cols.len(), |i, j| self[(i, cols[j])])
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * v`
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ * v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &x) in out.iter_mut().zip(self.row(i)) {
                *o += x * vi;
            }
        }
        out
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// Row `i` scaled by `w[i]`.
    pub fn scale_rows(&self, w: &[f64]) -> Matrix {
        debug_assert_eq!(w.len(), self.rows);
        Matrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * w[i])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| f64::max(m, libm::fabs(*x)))
}

/// Column-pivoted Householder QR, `A P = Q R`.
///
/// Only the reflectors and `R` are stored. `Q` is never formed; it is applied
/// to vectors on demand.
#[derive(Debug, Clone)]
pub struct Qr {
    nrows: usize,
    /// Unit-norm reflector `j`, acting on rows `j..nrows`.
    reflectors: Vec<Vec<f64>>,
    /// Upper-triangular factor, `d × d`, row-major.
    r: Matrix,
    /// `perm[j]` is the original column placed at position `j`.
    perm: Vec<usize>,
}

impl Qr {
    /// Factorizes a tall matrix, rejecting it when the pivoted diagonal of `R`
    /// reveals a condition estimate above [`CONDITION_LIMIT`].
    pub fn new(a: &Matrix) -> Result<Self> {
        let (n, d) = (a.nrows(), a.ncols());
        if d == 0 {
            return Err(Error::InvalidArgument("design has no columns".into()));
        }
        if n < d {
            return Err(Error::DimensionMismatch {
                context: "least squares needs at least as many rows as columns",
                expected: d,
                found: n,
            });
        }
        if !a.is_finite() {
            return Err(Error::NonFinite("design matrix"));
        }
        // Column-major working copy.
        let mut cols: Vec<Vec<f64>> = (0..d).map(|j| a.column(j)).collect();
        let mut perm: Vec<usize> = (0..d).collect();
        let mut reflectors = Vec::with_capacity(d);
        let mut r = Matrix::zeros(d, d);

        for j in 0..d {
            let pivot = (j..d)
                .map(|c| (c, dot(&cols[c][j..], &cols[c][j..])))
                .fold((j, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
                .0;
            cols.swap(j, pivot);
            perm.swap(j, pivot);
            for i in 0..j {
                let t = r[(i, j)];
                r[(i, j)] = r[(i, pivot)];
                r[(i, pivot)] = t;
            }

            let x = &cols[j][j..];
            let xnorm = norm2(x);
            let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
            let mut v: Vec<f64> = x.to_vec();
            v[0] -= alpha;
            let vnorm = norm2(&v);
            if vnorm > 0.0 && xnorm > 0.0 {
                for vi in v.iter_mut() {
                    *vi /= vnorm;
                }
            } else {
                v.iter_mut().for_each(|vi| *vi = 0.0);
            }
            for c in cols.iter_mut().skip(j) {
                let tail = &mut c[j..];
                let s = 2.0 * dot(&v, tail);
                for (t, vi) in tail.iter_mut().zip(&v) {
                    *t -= s * vi;
                }
            }
            for (c, col) in cols.iter().enumerate().skip(j) {
                r[(j, c)] = col[j];
            }
            reflectors.push(v);
        }

        let qr = Qr {
            nrows: n,
            reflectors,
            r,
            perm,
        };
        let cond = qr.condition_estimate();
        if !(cond <= CONDITION_LIMIT) {
            return Err(Error::SingularDesign {
                model: ModelLabel::default(),
                condition: cond,
            });
        }
        Ok(qr)
    }

    pub fn ncols(&self) -> usize {
        self.perm.len()
    }

    /// `|R₀₀| / |R_dd|`, a cheap proxy for the 2-norm condition number that
    /// column pivoting makes reliable in practice.
    pub fn condition_estimate(&self) -> f64 {
        let d = self.ncols();
        let first = libm::fabs(self.r[(0, 0)]);
        let last = libm::fabs(self.r[(d - 1, d - 1)]);
        if first == 0.0 {
            f64::INFINITY
        } else {
            first / last
        }
    }

    /// `Qᵀ b` (length `n`).
    pub fn apply_qt(&self, b: &[f64]) -> Vec<f64> {
        let mut out = b.to_vec();
        for (j, v) in self.reflectors.iter().enumerate() {
            let tail = &mut out[j..];
            let s = 2.0 * dot(v, tail);
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= s * vi;
            }
        }
        out
    }

    /// `Q y` for `y` of length `n`.
    pub fn apply_q(&self, y: &[f64]) -> Vec<f64> {
        let mut out = y.to_vec();
        for (j, v) in self.reflectors.iter().enumerate().rev() {
            let tail = &mut out[j..];
            let s = 2.0 * dot(v, tail);
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= s * vi;
            }
        }
        out
    }

    /// Solves `R x = y` by back substitution.
    fn solve_r(&self, y: &[f64]) -> Vec<f64> {
        let d = self.ncols();
        let mut x = vec![0.0; d];
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in i + 1..d {
                s -= self.r[(i, k)] * x[k];
            }
            x[i] = s / self.r[(i, i)];
        }
        x
    }

    /// Solves `Rᵀ x = y` by forward substitution.
    fn solve_rt(&self, y: &[f64]) -> Vec<f64> {
        let d = self.ncols();
        let mut x = vec![0.0; d];
        for i in 0..d {
            let mut s = y[i];
            for k in 0..i {
                s -= self.r[(k, i)] * x[k];
            }
            x[i] = s / self.r[(i, i)];
        }
        x
    }

    fn permute_in(&self, x: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&p| x[p]).collect()
    }

    fn permute_out(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        for (j, &p) in self.perm.iter().enumerate() {
            out[p] = z[j];
        }
        out
    }

    /// Least-squares solution of `A x ≈ b`.
    pub fn solve_least_squares(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.nrows);
        let qtb = self.apply_qt(b);
        let z = self.solve_r(&qtb[..self.ncols()]);
        self.permute_out(&z)
    }

    /// `(AᵀA)⁻¹ x`.
    pub fn gram_solve(&self, x: &[f64]) -> Vec<f64> {
        let y = self.solve_rt(&self.permute_in(x));
        self.permute_out(&self.solve_r(&y))
    }

    /// `A (AᵀA)⁻¹ x`, an `n`-vector, computed as `Q R⁻ᵀ Pᵀ x`.
    pub fn hat_direction(&self, x: &[f64]) -> Vec<f64> {
        let y = self.solve_rt(&self.permute_in(x));
        let mut padded = vec![0.0; self.nrows];
        padded[..y.len()].copy_from_slice(&y);
        self.apply_q(&padded)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| libm::fabs(x - y) <= tol)
    }

    fn sample() -> Matrix {
        Matrix::from_rows(&[
            [1.0, 0.5, 2.0],
            [1.0, -1.0, 0.3],
            [1.0, 2.0, -0.7],
            [1.0, 0.1, 1.1],
            [1.0, -0.4, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn q_is_orthogonal_and_reproduces_a() {
        let a = sample();
        let qr = Qr::new(&a).unwrap();
        let v = [0.3, -1.0, 2.0, 0.5, 0.7];
        let back = qr.apply_q(&qr.apply_qt(&v));
        assert!(approx(&back, &v, 1e-14));
        assert!(libm::fabs(norm2(&qr.apply_qt(&v)) - norm2(&v)) < 1e-13);
    }

    #[test]
    fn least_squares_satisfies_normal_equations() {
        let a = sample();
        let b = [1.0, 2.0, -1.0, 0.5, 3.0];
        let x = Qr::new(&a).unwrap().solve_least_squares(&b);
        let resid: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(f, y)| y - f).collect();
        assert!(norm_inf(&a.tr_mul_vec(&resid)) < 1e-12);
    }

    #[test]
    fn gram_solve_inverts_normal_matrix() {
        let a = sample();
        let qr = Qr::new(&a).unwrap();
        let ata = a.transpose().mul(&a);
        let x = [1.0, -2.0, 0.5];
        let y = qr.gram_solve(&x);
        assert!(approx(&ata.mul_vec(&y), &x, 1e-12));
        let h = qr.hat_direction(&x);
        assert!(approx(&h, &a.mul_vec(&y), 1e-12));
    }

    #[test]
    fn rank_deficient_design_is_rejected() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(matches!(Qr::new(&a), Err(Error::SingularDesign { .. })));
        let zero = Matrix::zeros(3, 1);
        assert!(matches!(Qr::new(&zero), Err(Error::SingularDesign { .. })));
    }

    #[test]
    fn wide_design_is_rejected() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(Qr::new(&a), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn select_columns_and_rows() {
        let a = Matrix::identity(3);
        let s = a.select_columns(&[0, 2]);
        assert_eq!(s.row(1), &[0.0, 0.0]);
        assert_eq!(s.row(2), &[0.0, 1.0]);
        let r = a.select_rows(&[2, 0]);
        assert_eq!(r.row(0), &[0.0, 0.0, 1.0]);
    }
}
