//! Affine degradation ground truth and the damping-ratio safe set.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Floor applied to `b` before the square root in predictions.
pub const B_FLOOR: f64 = 1e-12;

/// Days beyond which a maintenance-time search gives up.
pub const SEARCH_LIMIT_DAYS: f64 = 1e6;

/// `y(t) = (a₀ − λ₁ t, b₀ + λ₂ t)` with the safe set `ζ ≥ ζ_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationModel<T> {
    pub a0: T,
    pub b0: T,
    pub lambda: [T; 2],
    pub zeta_min: T,
    /// Days between measurements.
    pub period: T,
}

impl<T: Scalar> DegradationModel<T> {
    pub fn new(a0: T, b0: T, lambda: [T; 2], zeta_min: T, period: T) -> Result<Self> {
        if !(period > T::zero()) || !period.is_finite() {
            return Err(Error::InvalidParameter { name: "period", reason: format!("must be finite and > 0, got {period}") });
        }
        if lambda.iter().any(|l| !(*l >= T::zero()) || !l.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("components must be finite and >= 0, got ({}, {})", lambda[0], lambda[1]),
            });
        }
        if !a0.is_finite() || !zeta_min.is_finite() {
            return Err(Error::InvalidParameter { name: "a0", reason: "a0 and zeta_min must be finite".into() });
        }
        let zeta = damping_ratio([a0, b0])?;
        if zeta < zeta_min {
            return Err(Error::UnsafeStart { zeta: zeta.to_f64_lossy(), zeta_min: zeta_min.to_f64_lossy() });
        }
        Ok(Self { a0, b0, lambda, zeta_min, period })
    }

    /// Plant parameters `(a(t), b(t))` at day `t`.
    pub fn degrade(&self, t: T) -> [T; 2] {
        degrade_with(self.a0, self.b0, &self.lambda, t)
    }

    /// Ground-truth `ζ(t)`, with `b` floored as in predictions.
    pub fn zeta(&self, t: T) -> T {
        floored_zeta(self.degrade(t))
    }

    /// Last day the true parameters stay in the safe set.
    pub fn true_maintenance_time(&self) -> MaintenanceTime<T> {
        maintenance_time_for(self.a0, self.b0, &self.lambda, self.zeta_min)
    }
}

pub(crate) fn degrade_with<T: Scalar>(a0: T, b0: T, lambda: &[T], t: T) -> [T; 2] {
    [a0 - lambda[0] * t, b0 + lambda[1] * t]
}

/// `ζ = a / (2√b)`.
pub fn damping_ratio<T: Scalar>(y: [T; 2]) -> Result<T> {
    let [a, b] = y;
    if !(b > T::zero()) {
        return Err(Error::UndefinedRatio { b: b.to_f64_lossy() });
    }
    Ok(a / (T::lit(2.0) * b.sqrt()))
}

pub(crate) fn floored_zeta<T: Scalar>(y: [T; 2]) -> T {
    y[0] / (T::lit(2.0) * y[1].max(T::lit(B_FLOOR)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaintenanceFlag {
    /// The criterion holds at `t = 0` and fails after `days`.
    Crossing,
    /// The criterion never fails within the search limit; `days` is `+∞`.
    Never,
    /// The criterion already fails at `t = 0`; `days` is 0.
    UnsafeAtStart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaintenanceTime<T> {
    pub days: T,
    pub flag: MaintenanceFlag,
}

/// Largest `t ≥ 0` with `holds(t)`, for a criterion that is nonincreasing
/// in `t`, located to within `tol` days (the returned value is the last
/// point known to satisfy the criterion).
pub(crate) fn last_safe_time<T, F>(holds: F, tol: f64) -> MaintenanceTime<T>
where
    T: Scalar,
    F: Fn(T) -> bool,
{
    if !holds(T::zero()) {
        return MaintenanceTime { days: T::zero(), flag: MaintenanceFlag::UnsafeAtStart };
    }
    let mut lo = T::zero();
    let mut hi = T::one();
    while holds(hi) {
        lo = hi;
        hi = hi + hi;
        if hi.to_f64_lossy() > SEARCH_LIMIT_DAYS {
            return MaintenanceTime { days: T::infinity(), flag: MaintenanceFlag::Never };
        }
    }
    let tol = T::lit(tol);
    while hi - lo > tol {
        let mid = lo + (hi - lo) / T::lit(2.0);
        // Precision floor (f32 near large t): the bracket cannot shrink further.
        if mid <= lo || mid >= hi {
            break;
        }
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    MaintenanceTime { days: lo, flag: MaintenanceFlag::Crossing }
}

/// Maintenance time for arbitrary (possibly negative) slopes; `b` is
/// floored at [`B_FLOOR`].
pub fn maintenance_time_for<T: Scalar>(a0: T, b0: T, lambda: &[T], zeta_min: T) -> MaintenanceTime<T> {
    last_safe_time(|t| floored_zeta(degrade_with(a0, b0, lambda, t)) >= zeta_min, 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper() -> DegradationModel<f64> {
        DegradationModel::new(2.5, 1.0, [2.0 / 60.0, 5.0 / 60.0], 0.4, 5.0).unwrap()
    }

    // Independent root: squaring 2.5 − t/30 = 0.8√(1 + t/12) gives
    // t²/900 − t(1/6 + 0.64/12) + 6.25 − 0.64 = 0; the smaller root is t*.
    fn tstar_oracle() -> f64 {
        let (qa, qb, qc): (f64, f64, f64) = (1.0 / 900.0, -(1.0 / 6.0 + 0.64 / 12.0), 6.25 - 0.64);
        (-qb - (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa)
    }

    #[test]
    fn degrade_examples() {
        let d = paper();
        assert_eq!(d.degrade(0.0), [2.5, 1.0]);
        let [a, b] = d.degrade(30.0);
        assert!((a - 1.5).abs() < 1e-12 && (b - 3.5).abs() < 1e-12);
        let [a, b] = d.degrade(60.0);
        assert!((a - 0.5).abs() < 1e-12 && (b - 6.0).abs() < 1e-12);
    }

    #[test]
    fn damping_ratio_examples() {
        assert_eq!(damping_ratio([2.5, 1.0]).unwrap(), 1.25);
        for (b, c) in [(0.3f64, 0.7f64), (4.0, 2.0), (9.5, -0.1)] {
            assert!((damping_ratio([2.0 * f64::sqrt(b) * c, b]).unwrap() - c).abs() < 1e-12);
        }
        assert!((damping_ratio([1.5f64, 3.5]).unwrap() - 0.4009).abs() < 1e-4);
        assert!((paper().zeta(60.0) - 0.102).abs() < 1e-3);
        assert!(matches!(damping_ratio([1.0, 0.0]), Err(Error::UndefinedRatio { .. })));
        assert!(matches!(damping_ratio([1.0, -2.0]), Err(Error::UndefinedRatio { .. })));
    }

    #[test]
    fn paper_maintenance_time() {
        let t = paper().true_maintenance_time();
        assert_eq!(t.flag, MaintenanceFlag::Crossing);
        assert!((t.days - tstar_oracle()).abs() < 2e-6, "{} vs {}", t.days, tstar_oracle());
        assert!((t.days - 30.05).abs() < 0.1);
    }

    #[test]
    fn boundary_and_no_decay() {
        let at_edge = DegradationModel::new(2.5, 1.0, [2.0 / 60.0, 5.0 / 60.0], 1.25, 5.0).unwrap();
        assert_eq!(at_edge.true_maintenance_time().days, 0.0);
        let frozen = DegradationModel::<f64>::new(2.5, 1.0, [0.0, 0.0], 0.4, 5.0).unwrap();
        let t = frozen.true_maintenance_time();
        assert_eq!(t.flag, MaintenanceFlag::Never);
        assert!(t.days.is_infinite());
    }

    #[test]
    fn invalid_models_are_refused() {
        assert!(matches!(DegradationModel::new(0.5, 1.0, [0.1, 0.1], 0.4, 5.0), Err(Error::UnsafeStart { .. })));
        assert!(DegradationModel::new(2.5, 1.0, [-0.1, 0.1], 0.4, 5.0).is_err());
        assert!(DegradationModel::new(2.5, 1.0, [0.1, 0.1], 0.4, 0.0).is_err());
    }

    #[test]
    fn zeta_strictly_decreasing_past_tstar() {
        let d = paper();
        let end = d.true_maintenance_time().days + 10.0;
        let grid: Vec<f64> = (0..=4000).map(|i| end * i as f64 / 4000.0).collect();
        assert!(grid.windows(2).all(|w| d.zeta(w[1]) < d.zeta(w[0])));
    }

    #[test]
    fn f32_search_terminates() {
        let d = DegradationModel::<f32>::new(2.5, 1.0, [2.0 / 60.0, 5.0 / 60.0], 0.4, 5.0).unwrap();
        assert!((d.true_maintenance_time().days - 30.05).abs() < 0.1);
    }
}
