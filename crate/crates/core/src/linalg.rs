//! Small dense square matrices.
//!
//! Dimensions in this crate are tiny (the parameter space of the case study
//! is two-dimensional), so a row-major `Vec` and a cyclic Jacobi
//! eigensolver are all that is needed.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks_exact(self.n.max(1))).finish()
    }
}

/// Eigen-decomposition of a symmetric matrix: `A = V diag(values) Vᵀ`.
/// Eigenvalues are sorted ascending; column `j` of `vectors` pairs with
/// `values[j]`.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    /// Row-major construction; `data.len()` must be a perfect square.
    pub fn from_row_major(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::LengthMismatch { expected: n * n, got: data.len() });
        }
        Ok(Self { n, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "matmul dimension mismatch");
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    /// `A x`, written into `out`.
    #[inline]
    pub fn matvec_into(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum();
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        self.matvec_into(x, &mut out);
        out
    }

    /// `Aᵀ x`.
    pub fn tr_matvec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        for (i, &xi) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * xi;
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "add dimension mismatch");
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&a| a * s).collect() }
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn max_asymmetry(&self) -> T {
        self.max_abs_diff(&self.transpose())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Cyclic Jacobi eigen-decomposition. The input is symmetrised as
    /// `(A + Aᵀ)/2` first.
    pub fn sym_eigen(&self) -> SymEigen<T> {
        let n = self.n;
        let half = T::lit(0.5);
        let mut a = self.add(&self.transpose()).scale(half);
        let mut v = Self::identity(n);
        let frob2: T = a.data.iter().map(|&x| x * x).sum();
        let stop = T::epsilon() * T::epsilon() * frob2;

        for _sweep in 0..64 {
            let mut off = T::zero();
            for p in 0..n {
                for q in p + 1..n {
                    off = off + a[(p, q)] * a[(p, q)];
                }
            }
            if off <= stop || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                    let t = if theta.abs() > T::lit(1e100).min(T::max_value().sqrt()) {
                        half / theta
                    } else {
                        let sgn = if theta >= T::zero() { T::one() } else { -T::one() };
                        sgn / (theta.abs() + (theta * theta + T::one()).sqrt())
                    };
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[(k, p)], a[(k, q)]);
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&i| a[(i, i)]).collect();
        let mut vectors = Self::zeros(n);
        for (new_j, &old_j) in order.iter().enumerate() {
            for k in 0..n {
                vectors[(k, new_j)] = v[(k, old_j)];
            }
        }
        SymEigen { values, vectors }
    }

    /// Checks symmetry and positive semidefiniteness within `tol`, returning
    /// the eigen-decomposition on success.
    pub fn check_psd(&self, tol: T) -> Result<SymEigen<T>> {
        let scale = T::one().max(self.data.iter().fold(T::zero(), |m, x| m.max(x.abs())));
        let asym = self.max_asymmetry();
        if asym > tol * scale {
            return Err(Error::NotSymmetric { asymmetry: asym.to_f64_lossy() });
        }
        let eig = self.sym_eigen();
        let min = eig.values.first().copied().unwrap_or_else(T::zero);
        if min < -tol * scale {
            return Err(Error::NotPsd { min_eigenvalue: min.to_f64_lossy() });
        }
        Ok(eig)
    }

    /// Principal square root of a PSD matrix; eigenvalues within `-tol` of
    /// zero are clamped to zero.
    pub fn psd_sqrt(&self, tol: T) -> Result<Self> {
        let eig = self.check_psd(tol)?;
        Ok(eig.reconstruct(|l| l.max(T::zero()).sqrt()))
    }

    /// `(σ_min, σ_max)` of the matrix, from the eigenvalues of `AᵀA`.
    pub fn singular_value_extremes(&self) -> (T, T) {
        let gram = self.transpose().matmul(self);
        let eig = gram.sym_eigen();
        let lo = eig.values.first().copied().unwrap_or_else(T::zero).max(T::zero());
        let hi = eig.values.last().copied().unwrap_or_else(T::zero).max(T::zero());
        (lo.sqrt(), hi.sqrt())
    }
}

/// Singular value decomposition `A = U diag(values) Vᵀ` with `U` and `V`
/// orthogonal. Singular values are not sorted.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub values: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Scalar> Matrix<T> {
    /// One-sided (Hestenes) Jacobi SVD. Columns of `U` belonging to
    /// numerically zero singular values are completed to an orthonormal basis.
    pub fn svd(&self) -> Svd<T> {
        let n = self.n;
        let mut g = self.clone();
        let mut v = Self::identity(n);
        let eps = T::epsilon();
        for _sweep in 0..64 {
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                    for k in 0..n {
                        let (gp, gq) = (g[(k, p)], g[(k, q)]);
                        alpha = alpha + gp * gp;
                        beta = beta + gq * gq;
                        gamma = gamma + gp * gq;
                    }
                    if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                    let sgn = if zeta >= T::zero() { T::one() } else { -T::one() };
                    let t = sgn / (zeta.abs() + (zeta * zeta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = c * t;
                    for m in [&mut g, &mut v] {
                        for k in 0..n {
                            let (xp, xq) = (m[(k, p)], m[(k, q)]);
                            m[(k, p)] = c * xp - s * xq;
                            m[(k, q)] = s * xp + c * xq;
                        }
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let values: Vec<T> = (0..n).map(|j| (0..n).map(|k| g[(k, j)] * g[(k, j)]).sum::<T>().sqrt()).collect();
        let largest = values.iter().fold(T::zero(), |m, &x| m.max(x));
        let cutoff = largest * eps * T::from_usize_lossy(n.max(1));
        let mut u = Self::zeros(n);
        let mut filled = vec![false; n];
        for j in 0..n {
            if values[j] > cutoff {
                for k in 0..n {
                    u[(k, j)] = g[(k, j)] / values[j];
                }
                filled[j] = true;
            }
        }
        // Gram–Schmidt completion from the standard basis.
        let mut next_basis = 0;
        for j in 0..n {
            if filled[j] {
                continue;
            }
            while next_basis < n {
                let mut col = vec![T::zero(); n];
                col[next_basis] = T::one();
                next_basis += 1;
                for _pass in 0..2 {
                    for other in (0..n).filter(|&o| filled[o]) {
                        let dot: T = (0..n).map(|k| col[k] * u[(k, other)]).sum();
                        for k in 0..n {
                            col[k] = col[k] - dot * u[(k, other)];
                        }
                    }
                }
                let norm = col.iter().map(|&x| x * x).sum::<T>().sqrt();
                if norm > T::lit(0.5) {
                    for k in 0..n {
                        u[(k, j)] = col[k] / norm;
                    }
                    filled[j] = true;
                    break;
                }
            }
        }
        Svd { u, values, v }
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }
}

impl<T: Scalar> SymEigen<T> {
    /// `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let n = self.values.len();
        let mut out = Matrix::zeros(n);
        for (k, &l) in self.values.iter().enumerate() {
            let fl = f(l);
            for i in 0..n {
                let vik = self.vectors[(i, k)] * fl;
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] + vik * self.vectors[(j, k)];
                }
            }
        }
        out
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}
