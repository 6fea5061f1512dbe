//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All math is written against [`Scalar`], which `f32` and `f64` implement.
//! Tolerances quoted for `f64` are widened for `f32` via [`Scalar::tol`].

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `tol` for `f64`, or a few hundred machine epsilons if that is coarser.
    #[inline]
    fn tol(tol: f64) -> Self {
        Self::lit(tol).max(Self::epsilon() * Self::lit(256.0))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
