//! Step-size admissibility and the theoretical convergence envelope.

use crate::error::Result;
use crate::functionals::StreamingLsObjective;
use crate::linalg::Matrix;
use crate::measures::ParticleMeasure;
use crate::scalar::Scalar;

/// Constants governing the convergence of the streaming least-squares flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBoundReport<T> {
    /// Geodesic convexity modulus `σ_min(W)²`.
    pub alpha: T,
    /// `4 max{σ_max(W)², ρ}`.
    pub c: T,
    /// Gradient noise level `C σ_w²`.
    pub sigma2: T,
    /// `C / α`.
    pub eta: T,
    pub tau: T,
    /// `min{1/α, 2/C}`; admissible steps lie in `(0, tau_max)`.
    pub tau_max: T,
    /// `1 / (2 max{σ_max(W)², ρ})`.
    pub tau_max_simplified: T,
    /// Asymptotic radius `σ_w √(ητ)` of the ball holding `𝔼 W2(μ_k, μ*)`.
    pub ball_radius: T,
    /// `1 − ατ`.
    pub per_step_rate: T,
    pub tau_valid: bool,
}

impl<T: Scalar> StepBoundReport<T> {
    /// Builds the report from `α`, `C`, the noise second moment and `τ`.
    pub fn from_constants(alpha: T, c: T, sigma_w2: T, tau: T) -> Self {
        let two = T::lit(2.0);
        let tau_max = (T::one() / alpha).min(two / c);
        let eta = c / alpha;
        Self {
            alpha,
            c,
            sigma2: c * sigma_w2,
            eta,
            tau,
            tau_max,
            tau_max_simplified: two / c,
            ball_radius: (sigma_w2 * eta * tau).sqrt(),
            per_step_rate: T::one() - alpha * tau,
            tau_valid: tau > T::zero() && tau < tau_max,
        }
    }

    pub fn for_objective(obj: &StreamingLsObjective<T>, tau: T) -> Self {
        Self::from_constants(obj.convexity_modulus(), obj.growth_constant(), obj.sigma_w2(), tau)
    }

    /// `τσ²/α`, the limit of the squared-distance envelope.
    pub fn asymptotic_sq_radius(&self) -> T {
        self.tau * self.sigma2 / self.alpha
    }
}

/// Derives the step-size report for `(W, ρ, σ_w², τ)`. Fails if `W` is
/// singular or `ρ ≤ 0`; an out-of-range `τ` is reported via `tau_valid`.
pub fn validate_tau<T: Scalar>(w: &Matrix<T>, rho: T, sigma_w2: T, tau: T) -> Result<StepBoundReport<T>> {
    let obj = StreamingLsObjective::new(w.clone(), rho, None, sigma_w2)?;
    Ok(StepBoundReport::for_objective(&obj, tau))
}

/// Envelope on `𝔼 W2(μ_k, μ*)²`:
/// `(1 − τα)^k (W2(μ₀, μ*)² − τσ²/α) + τσ²/α`.
pub fn convergence_bound<T: Scalar>(report: &StepBoundReport<T>, w2_0: T, k: usize) -> T {
    let w0_sq = w2_0 * w2_0;
    if k == 0 {
        return w0_sq;
    }
    let floor = report.asymptotic_sq_radius();
    let exponent = i32::try_from(k).unwrap_or(i32::MAX);
    report.per_step_rate.powi(exponent) * (w0_sq - floor) + floor
}

/// `|‖φ‖_{L²(m)} − ‖φ‖_{L²(reference)}|`. For `L`-Lipschitz `φ` this is at
/// most `L · W2(m, reference)`.
pub fn lipschitz_norm_gap<T: Scalar>(
    m: &ParticleMeasure<T>,
    reference: &ParticleMeasure<T>,
    phi: impl Fn(&[T]) -> T,
) -> T {
    let norm = |c: &ParticleMeasure<T>| {
        (c.points().map(|p| {
            let v = phi(p);
            v * v
        })
        .sum::<T>()
            / T::from_usize_lossy(c.len()))
        .sqrt()
    };
    (norm(m) - norm(reference)).abs()
}
