//! Differenced measurements, belief-based maintenance prediction and the
//! classical least-squares baseline.

use rayon::prelude::*;

use super::degradation::{
    degrade_with, floored_zeta, last_safe_time, maintenance_time_for, DegradationModel, MaintenanceTime,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measures::{percentile_in_place, ParticleMeasure};
use crate::scalar::Scalar;

/// Absolute tolerance on the spacing between consecutive observations.
pub const SPACING_TOL: f64 = 1e-9;

/// Tolerance (days) of the belief-based maintenance-time bisection.
pub const RULE_TOL_DAYS: f64 = 1e-3;

/// Trajectory least-squares estimate `ŷ(t) = (â, b̂)` on day `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T> {
    pub t: T,
    pub y_hat: [T; 2],
}

/// Consecutive increments `ỹ_k = ŷ_{k+1} − ŷ_k` of regularly spaced
/// observations, with model matrix `W = diag(−T, T)` for `θ = (λ₁, λ₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferencedStream<T> {
    pub period: T,
    pub increments: Vec<Vec<T>>,
}

impl<T: Scalar> DifferencedStream<T> {
    pub fn w(&self) -> Matrix<T> {
        Matrix::from_diag(&[-self.period, self.period])
    }
}

pub fn difference_stream<T: Scalar>(obs: &[Observation<T>]) -> Result<DifferencedStream<T>> {
    if obs.len() < 2 {
        return Err(Error::InvalidParameter { name: "observations", reason: format!("need at least 2, got {}", obs.len()) });
    }
    if let Some(i) = obs.iter().position(|o| !o.t.is_finite() || o.t < T::zero() || o.y_hat.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite { index: i });
    }
    let period = obs[1].t - obs[0].t;
    for pair in obs.windows(2) {
        let gap = pair[1].t - pair[0].t;
        if !(period > T::zero()) || (gap - period).abs().to_f64_lossy() > SPACING_TOL {
            return Err(Error::IrregularSpacing {
                t0: pair[0].t.to_f64_lossy(),
                t1: pair[1].t.to_f64_lossy(),
                gap: gap.to_f64_lossy(),
                expected: period.to_f64_lossy(),
            });
        }
    }
    let increments = obs
        .windows(2)
        .map(|p| vec![p[1].y_hat[0] - p[0].y_hat[0], p[1].y_hat[1] - p[0].y_hat[1]])
        .collect();
    Ok(DifferencedStream { period, increments })
}

/// One row of the damping-ratio band: `ζ` percentiles and mean of the
/// pushforward of the belief at day `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandRow<T> {
    pub t: T,
    pub lo: T,
    pub mean: T,
    pub hi: T,
}

fn zeta_values<T: Scalar>(m: &ParticleMeasure<T>, d: &DegradationModel<T>, t: T) -> Vec<T> {
    m.points().map(|theta| floored_zeta(degrade_with(d.a0, d.b0, theta, t))).collect()
}

fn check_belief<T: Scalar>(m: &ParticleMeasure<T>) -> Result<()> {
    if m.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if m.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: m.dim() });
    }
    Ok(())
}

pub fn predict_damping_band<T: Scalar>(
    m: &ParticleMeasure<T>,
    d: &DegradationModel<T>,
    t_grid: &[T],
    p_lo: f64,
    p_hi: f64,
) -> Result<Vec<BandRow<T>>> {
    check_belief(m)?;
    if let Some(&t) = t_grid.iter().find(|t| !(**t >= T::zero())) {
        return Err(Error::InvalidParameter { name: "t_grid", reason: format!("days must be >= 0, got {t}") });
    }
    let rows = t_grid
        .par_iter()
        .map(|&t| {
            let mut values = zeta_values(m, d, t);
            // Offset form keeps the mean exact when every value coincides.
            let v0 = values[0];
            let mean = v0 + values.iter().map(|&v| v - v0).sum::<T>() / T::from_usize_lossy(values.len());
            let lo = percentile_in_place(&mut values, p_lo);
            let hi = percentile_in_place(&mut values, p_hi);
            BandRow { t, lo, mean, hi }
        })
        .collect();
    Ok(rows)
}

/// Functional of the belief that decides when maintenance is due.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaintenanceRule {
    /// The `p`-quantile of `ζ(t)` stays above `ζ_min`.
    Percentile(f64),
    /// `ζ(t)` at the belief mean stays above `ζ_min`.
    Mean,
    /// At least a `1 − α` fraction of particles stays safe.
    Chance(f64),
}

impl Default for MaintenanceRule {
    fn default() -> Self {
        MaintenanceRule::Percentile(0.1)
    }
}

pub fn suggested_maintenance_time<T: Scalar>(
    m: &ParticleMeasure<T>,
    d: &DegradationModel<T>,
    rule: MaintenanceRule,
) -> Result<MaintenanceTime<T>> {
    check_belief(m)?;
    let time = match rule {
        MaintenanceRule::Percentile(p) => {
            check_fraction("p", p)?;
            last_safe_time(|t| percentile_in_place(&mut zeta_values(m, d, t), p) >= d.zeta_min, RULE_TOL_DAYS)
        }
        MaintenanceRule::Mean => {
            let mean = m.mean();
            last_safe_time(|t| floored_zeta(degrade_with(d.a0, d.b0, &mean, t)) >= d.zeta_min, RULE_TOL_DAYS)
        }
        MaintenanceRule::Chance(alpha) => {
            check_fraction("alpha", alpha)?;
            let needed = (1.0 - alpha) * m.len() as f64;
            last_safe_time(
                |t| {
                    let safe = zeta_values(m, d, t).iter().filter(|&&z| z >= d.zeta_min).count();
                    safe as f64 >= needed - 1e-9
                },
                RULE_TOL_DAYS,
            )
        }
    };
    Ok(time)
}

fn check_fraction(name: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: format!("must lie in [0, 1], got {p}") })
    }
}

/// Through-origin regression of the degradation slopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsBaseline<T> {
    pub lambda_hat: [T; 2],
    /// Maintenance time with the unclamped `λ̂`.
    pub t_star: MaintenanceTime<T>,
    /// Some component of `λ̂` is negative.
    pub negative_slope: bool,
}

pub fn ls_baseline<T: Scalar>(obs: &[Observation<T>], a0: T, b0: T, zeta_min: T) -> Result<LsBaseline<T>> {
    if obs.len() < 2 {
        return Err(Error::InvalidParameter { name: "observations", reason: format!("need at least 2, got {}", obs.len()) });
    }
    let (mut tt, mut ta, mut tb) = (T::zero(), T::zero(), T::zero());
    for o in obs {
        tt = tt + o.t * o.t;
        ta = ta + o.t * (a0 - o.y_hat[0]);
        tb = tb + o.t * (o.y_hat[1] - b0);
    }
    if !(tt > T::zero()) {
        return Err(Error::RankDeficient("all observation times are zero".into()));
    }
    let lambda_hat = [ta / tt, tb / tt];
    Ok(LsBaseline {
        lambda_hat,
        t_star: maintenance_time_for(a0, b0, &lambda_hat, zeta_min),
        negative_slope: lambda_hat.iter().any(|&l| l < T::zero()),
    })
}
