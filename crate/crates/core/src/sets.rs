//! Closed convex constraint sets with closed-form Euclidean projections.
//!
//! Projecting a particle measure onto the measures supported in a set is
//! the same as projecting every particle, so [`ConvexSet::project_measure`]
//! is a pushforward of [`ConvexSet::project_point`].

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::ParticleMeasure;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet<T> {
    /// `{x : lo ≤ x ≤ hi}`.
    Box { lo: Vec<T>, hi: Vec<T> },
    /// `ℝᵈ_{≥0}`.
    NonnegOrthant { dim: usize },
    /// `{x : aᵀx ≤ b}` with `a ≠ 0`.
    Halfspace { normal: Vec<T>, offset: T },
    /// `{x : ‖x − c‖ ≤ r}`.
    Ball { center: Vec<T>, radius: T },
    /// `ℝᵈ`.
    All { dim: usize },
}

impl<T: Scalar> ConvexSet<T> {
    pub fn boxed(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        if lo.is_empty() {
            return Err(Error::InvalidSet("box needs dimension >= 1".into()));
        }
        for (j, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l <= h) || l.is_nan() || h.is_nan() {
                return Err(Error::InvalidBox { coord: j, lo: l.to_f64_lossy(), hi: h.to_f64_lossy() });
            }
        }
        Ok(Self::Box { lo, hi })
    }

    pub fn nonneg_orthant(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSet("orthant needs dimension >= 1".into()));
        }
        Ok(Self::NonnegOrthant { dim })
    }

    pub fn halfspace(normal: Vec<T>, offset: T) -> Result<Self> {
        if normal.is_empty() || normal.iter().all(|&a| a == T::zero()) {
            return Err(Error::InvalidSet("halfspace normal must be nonzero".into()));
        }
        if !offset.is_finite() || normal.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidSet("halfspace parameters must be finite".into()));
        }
        Ok(Self::Halfspace { normal, offset })
    }

    pub fn ball(center: Vec<T>, radius: T) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidSet("ball needs dimension >= 1".into()));
        }
        if !(radius >= T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidSet(format!("ball radius must be finite and >= 0, got {radius}")));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn all(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSet("dimension must be >= 1".into()));
        }
        Ok(Self::All { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Box { lo, .. } => lo.len(),
            Self::NonnegOrthant { dim } | Self::All { dim } => *dim,
            Self::Halfspace { normal, .. } => normal.len(),
            Self::Ball { center, .. } => center.len(),
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got });
        }
        Ok(())
    }

    /// Whether `x` satisfies the defining inequalities within `tol`.
    pub fn contains(&self, x: &[T], tol: T) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Self::Box { lo, hi } => {
                x.iter().zip(lo).zip(hi).all(|((&v, &l), &h)| v >= l - tol && v <= h + tol)
            }
            Self::NonnegOrthant { .. } => x.iter().all(|&v| v >= -tol),
            Self::Halfspace { normal, offset } => dot(normal, x) <= *offset + tol,
            Self::Ball { center, radius } => norm_diff(x, center) <= *radius + tol,
            Self::All { .. } => true,
        }
    }

    /// Euclidean projection of `x`. Points already in the set are returned
    /// unchanged, which makes the projection exactly idempotent.
    pub fn project_point(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x.len())?;
        let mut out = vec![T::zero(); x.len()];
        self.project_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked projection; `x` and `out` must both have length `dim()`.
    pub(crate) fn project_into(&self, x: &[T], out: &mut [T]) {
        match self {
            Self::Box { lo, hi } => {
                for (((o, &v), &l), &h) in out.iter_mut().zip(x).zip(lo).zip(hi) {
                    *o = v.max(l).min(h);
                }
            }
            Self::NonnegOrthant { .. } => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = if v < T::zero() { T::zero() } else { v };
                }
            }
            Self::All { .. } => out.copy_from_slice(x),
            Self::Halfspace { normal, offset } => {
                out.copy_from_slice(x);
                let excess = dot(normal, x) - *offset;
                if excess <= T::zero() {
                    return;
                }
                let nn = dot(normal, normal);
                let mut step = excess / nn;
                // Rounding can leave the result a hair outside; push it in.
                for _ in 0..64 {
                    for ((o, &v), &a) in out.iter_mut().zip(x).zip(normal) {
                        *o = v - step * a;
                    }
                    if dot(normal, out) <= *offset {
                        break;
                    }
                    step = step * (T::one() + T::lit(4.0) * T::epsilon()) + T::min_positive_value();
                }
            }
            Self::Ball { center, radius } => {
                out.copy_from_slice(x);
                let dist = norm_diff(x, center);
                if dist <= *radius {
                    return;
                }
                let mut shrink = T::one();
                for _ in 0..64 {
                    for ((o, &v), &c) in out.iter_mut().zip(x).zip(center) {
                        *o = c + (v - c) * *radius * shrink / dist;
                    }
                    if norm_diff(out, center) <= *radius {
                        break;
                    }
                    shrink = shrink * (T::one() - T::lit(4.0) * T::epsilon());
                }
            }
        }
    }

    /// `(proj_Θ)#μ`, the Wasserstein projection of `m` onto measures
    /// supported in the set.
    pub fn project_measure(&self, m: &ParticleMeasure<T>) -> Result<ParticleMeasure<T>> {
        self.check_dim(m.dim())?;
        let d = m.dim();
        let mut out = vec![T::zero(); m.as_flat().len()];
        out.par_chunks_mut(d)
            .zip(m.as_flat().par_chunks(d))
            .for_each(|(dst, src)| self.project_into(src, dst));
        ParticleMeasure::from_flat(d, out)
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
fn norm_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    crate::measures::sq_dist(a, b).sqrt()
}
