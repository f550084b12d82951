//! Small dense linear algebra, generic over [`Scalar`].
//!
//! The models in this crate have single- to low-double-digit dimensions, so a
//! hand-rolled row-major matrix with an LDL^T factorization covers everything
//! (solves, inverses, log-determinants) without pulling scalar-genericity
//! through an external linear-algebra crate.

use serde::{Deserialize, Serialize};

use crate::dual::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat<S> {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Mat { nrows, ncols, data: vec![S::zero(); nrows * ncols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
        Mat { nrows, ncols, data: rows.into_iter().flatten().collect() }
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// `A v` for a column vector `v`.
    pub fn matvec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                let mut acc = S::zero();
                for j in 0..self.ncols {
                    acc = acc + self[(i, j)].clone() * v[j].clone();
                }
                acc
            })
            .collect()
    }

    /// `A^T v` for a column vector `v`.
    pub fn tr_matvec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.nrows);
        (0..self.ncols)
            .map(|j| {
                let mut acc = S::zero();
                for i in 0..self.nrows {
                    acc = acc + self[(i, j)].clone() * v[i].clone();
                }
                acc
            })
            .collect()
    }

    pub fn matmul(&self, rhs: &Mat<S>) -> Mat<S> {
        assert_eq!(self.ncols, rhs.nrows);
        let mut out: Mat<S> = Mat::zeros(self.nrows, rhs.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self[(i, k)].clone();
                for j in 0..rhs.ncols {
                    out[(i, j)] = out[(i, j)].clone() + a.clone() * rhs[(k, j)].clone();
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat<S> {
        let mut out = Mat::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                out[(j, i)] = self[(i, j)].clone();
            }
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<S> {
        (0..self.nrows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn to_f64(&self) -> Mat<f64> {
        Mat {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().map(Scalar::primal).collect(),
        }
    }
}

impl Mat<f64> {
    pub fn inf_norm(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Lift an `f64` matrix into any scalar type as constants.
    pub fn lift<S: Scalar>(&self) -> Mat<S> {
        Mat {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().map(|&v| S::from_f64(v)).collect(),
        }
    }
}

impl<S> std::ops::Index<(usize, usize)> for Mat<S> {
    type Output = S;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.ncols + j]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for Mat<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.ncols + j]
    }
}

/// `A = L D L^T` with unit lower-triangular `L` and positive diagonal `D`.
#[derive(Debug, Clone)]
pub struct Ldl<S> {
    pub lower: Mat<S>,
    pub diag: Vec<S>,
}

/// Factor a symmetric positive-definite matrix. Returns `None` when a pivot
/// is non-positive or non-finite at the primal level.
pub fn ldl_factor<S: Scalar>(a: &Mat<S>) -> Option<Ldl<S>> {
    assert!(a.is_square());
    let n = a.nrows;
    let mut lower = Mat::<S>::identity(n);
    let mut diag = vec![S::zero(); n];
    for j in 0..n {
        let mut d = a[(j, j)].clone();
        for k in 0..j {
            d = d - lower[(j, k)].clone() * lower[(j, k)].clone() * diag[k].clone();
        }
        let dp = d.primal();
        if !(dp.is_finite() && dp > 0.0) {
            return None;
        }
        diag[j] = d.clone();
        for i in (j + 1)..n {
            let mut s = a[(i, j)].clone();
            for k in 0..j {
                s = s - lower[(i, k)].clone() * lower[(j, k)].clone() * diag[k].clone();
            }
            lower[(i, j)] = s / d.clone();
        }
    }
    Some(Ldl { lower, diag })
}

impl<S: Scalar> Ldl<S> {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Solve `A x = b` using the stored factors.
    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        // L y = b
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] = y[i].clone() - self.lower[(i, k)].clone() * y[k].clone();
            }
        }
        // D z = y
        for i in 0..n {
            y[i] = y[i].clone() / self.diag[i].clone();
        }
        // L^T x = z
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] = y[i].clone() - self.lower[(k, i)].clone() * y[k].clone();
            }
        }
        y
    }

    /// `log det A`, accumulated from the factor diagonal.
    pub fn log_det(&self) -> S {
        let mut acc = S::zero();
        for d in &self.diag {
            acc = acc + d.ln();
        }
        acc
    }

    pub fn inverse(&self) -> Mat<S> {
        let n = self.dim();
        let mut inv = Mat::zeros(n, n);
        for j in 0..n {
            let mut e = vec![S::zero(); n];
            e[j] = S::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i].clone();
            }
        }
        inv
    }
}

/// `A v` for a constant `f64` matrix applied to generic scalars.
pub fn mat_vec_generic<S: Scalar>(a: &Mat<f64>, v: &[S]) -> Vec<S> {
    assert_eq!(v.len(), a.ncols);
    (0..a.nrows)
        .map(|i| {
            let mut acc = S::zero();
            for j in 0..a.ncols {
                let c = a[(i, j)];
                if c != 0.0 {
                    acc = acc + v[j].scale(c);
                }
            }
            acc
        })
        .collect()
}

/// `A^T v` for a constant `f64` matrix applied to generic scalars.
pub fn tr_mat_vec_generic<S: Scalar>(a: &Mat<f64>, v: &[S]) -> Vec<S> {
    assert_eq!(v.len(), a.nrows);
    (0..a.ncols)
        .map(|j| {
            let mut acc = S::zero();
            for i in 0..a.nrows {
                let c = a[(i, j)];
                if c != 0.0 {
                    acc = acc + v[i].scale(c);
                }
            }
            acc
        })
        .collect()
}

/// Infinity norm of `a - b` for equal-length `f64` slices.
pub fn vec_inf_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()))
}

pub fn vec_inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}
