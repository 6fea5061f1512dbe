//! The streaming least-squares objective and its Wasserstein gradients.
//!
//! For data `ŷ = Wθ* + w` with zero-mean noise of total second moment
//! `σ_w² = 𝔼‖w‖²`, the objective over beliefs `μ` is
//!
//! ```text
//! J(μ) = ½ 𝔼_μ‖W(θ − θ*)‖² + ½ σ_w² + (ρ/2) 𝔼_μ‖θ − 𝔼_μθ‖²
//! ```
//!
//! with Wasserstein gradient `WᵀW(θ − θ*) + ρ(θ − 𝔼_μθ)` and the unbiased
//! single-sample estimate `ξ(θ, ŷ) = Wᵀ(Wθ − ŷ) + ρ(θ − 𝔼_μθ)`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measures::ParticleMeasure;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct StreamingLsObjective<T> {
    w: Matrix<T>,
    wtw: Matrix<T>,
    rho: T,
    theta_star: Option<Vec<T>>,
    sigma_w2: T,
    sigma_min: T,
    sigma_max: T,
}

impl<T: Scalar> StreamingLsObjective<T> {
    /// `w` must be invertible, `rho > 0`, `sigma_w2 ≥ 0`. Leave `theta_star`
    /// empty in deployment, where only stochastic gradients are available.
    pub fn new(w: Matrix<T>, rho: T, theta_star: Option<Vec<T>>, sigma_w2: T) -> Result<Self> {
        if !w.is_finite() {
            return Err(Error::InvalidParameter { name: "W", reason: "entries must be finite".into() });
        }
        if !(rho > T::zero()) || !rho.is_finite() {
            return Err(Error::InvalidParameter { name: "rho", reason: format!("must be > 0, got {rho}") });
        }
        if !(sigma_w2 >= T::zero()) || !sigma_w2.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma_w2",
                reason: format!("must be >= 0, got {sigma_w2}"),
            });
        }
        let (sigma_min, sigma_max) = w.singular_value_extremes();
        if sigma_min <= T::tol(1e-12) * T::one().max(sigma_max) {
            return Err(Error::SingularMatrix { sigma_min: sigma_min.to_f64_lossy() });
        }
        if let Some(ts) = &theta_star {
            if ts.len() != w.dim() {
                return Err(Error::DimensionMismatch { expected: w.dim(), got: ts.len() });
            }
        }
        let wtw = w.transpose().matmul(&w);
        Ok(Self { w, wtw, rho, theta_star, sigma_w2, sigma_min, sigma_max })
    }

    pub fn dim(&self) -> usize {
        self.w.dim()
    }

    pub fn w(&self) -> &Matrix<T> {
        &self.w
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn sigma_w2(&self) -> T {
        self.sigma_w2
    }

    pub fn theta_star(&self) -> Option<&[T]> {
        self.theta_star.as_deref()
    }

    /// `(σ_min(W), σ_max(W))`.
    pub fn singular_values(&self) -> (T, T) {
        (self.sigma_min, self.sigma_max)
    }

    /// Geodesic convexity modulus `σ_min(W)²`.
    pub fn convexity_modulus(&self) -> T {
        self.sigma_min * self.sigma_min
    }

    /// `4 max{σ_max(W)², ρ}`.
    pub fn growth_constant(&self) -> T {
        T::lit(4.0) * (self.sigma_max * self.sigma_max).max(self.rho)
    }

    /// `J(μ*) = ½σ_w²`, attained at `δ_{θ*}`.
    pub fn optimal_value(&self) -> T {
        T::lit(0.5) * self.sigma_w2
    }

    /// Noise-free observation `Wθ*`.
    pub fn clean_observation(&self) -> Result<Vec<T>> {
        let ts = self.truth("clean_observation")?;
        Ok(self.w.matvec(ts))
    }

    fn truth(&self, what: &'static str) -> Result<&[T]> {
        self.theta_star.as_deref().ok_or(Error::MissingTruth(what))
    }

    /// `J(m)`.
    pub fn evaluate(&self, m: &ParticleMeasure<T>) -> Result<T> {
        let ts = self.truth("evaluate_objective")?;
        self.check_dim(m.dim())?;
        let d = self.dim();
        let half = T::lit(0.5);
        let mut diff = vec![T::zero(); d];
        let mut wd = vec![T::zero(); d];
        let mut fit = T::zero();
        for p in m.points() {
            for ((o, &x), &t) in diff.iter_mut().zip(p).zip(ts) {
                *o = x - t;
            }
            self.w.matvec_into(&diff, &mut wd);
            fit = fit + wd.iter().map(|&v| v * v).sum::<T>();
        }
        fit = fit / T::from_usize_lossy(m.len());
        Ok(half * fit + half * self.sigma_w2 + half * self.rho * m.total_variance())
    }

    /// `4 max{σ_max², ρ} (J(m) − J(μ*)) + 4 max{σ_max², ρ} σ_w²`, the bound on
    /// `𝔼‖ξ‖²_{L²(m)}`.
    pub fn gradient_second_moment_bound(&self, m: &ParticleMeasure<T>) -> Result<T> {
        let c = self.growth_constant();
        Ok(c * (self.evaluate(m)? - self.optimal_value()) + c * self.sigma_w2)
    }

    /// Exact Wasserstein gradient at `m`; `𝔼_m[θ]` is frozen at call time.
    pub fn exact_gradient(&self, m: &ParticleMeasure<T>) -> Result<GradientField<T>> {
        let ts = self.truth("exact_gradient")?.to_vec();
        self.check_dim(m.dim())?;
        let mean = m.mean();
        let wtw = self.wtw.clone();
        let rho = self.rho;
        Ok(GradientField::new(self.dim(), move |theta| {
            let diff: Vec<T> = theta.iter().zip(&ts).map(|(&x, &t)| x - t).collect();
            let mut g = wtw.matvec(&diff);
            for ((gi, &x), &mi) in g.iter_mut().zip(theta).zip(&mean) {
                *gi = *gi + rho * (x - mi);
            }
            g
        }))
    }

    /// Prepares `ξ(·, ŷ)` for one sweep over a measure with mean `mu_mean`.
    pub fn stochastic_field(&self, y_hat: &[T], mu_mean: &[T]) -> Result<StochasticGradient<'_, T>> {
        self.check_dim(y_hat.len())?;
        self.check_dim(mu_mean.len())?;
        if y_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { name: "y_hat", reason: "must be finite".into() });
        }
        Ok(StochasticGradient { obj: self, y_hat: y_hat.to_vec(), mean: mu_mean.to_vec() })
    }

    /// `ξ(θ, ŷ) = Wᵀ(Wθ − ŷ) + ρ(θ − 𝔼_μθ)`.
    pub fn stochastic_gradient(&self, theta: &[T], y_hat: &[T], mu_mean: &[T]) -> Result<Vec<T>> {
        self.check_dim(theta.len())?;
        let field = self.stochastic_field(y_hat, mu_mean)?;
        let mut out = vec![T::zero(); self.dim()];
        field.eval_into(theta, &mut out);
        Ok(out)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got });
        }
        Ok(())
    }
}

/// `ξ(·, ŷ)` with the observation and belief mean fixed.
pub struct StochasticGradient<'a, T> {
    obj: &'a StreamingLsObjective<T>,
    y_hat: Vec<T>,
    mean: Vec<T>,
}

impl<T: Scalar> StochasticGradient<'_, T> {
    /// Writes `ξ(θ, ŷ)` into `out`. Lengths are not checked.
    #[inline]
    pub fn eval_into(&self, theta: &[T], out: &mut [T]) {
        let d = theta.len();
        let w = &self.obj.w;
        let rho = self.obj.rho;
        // residual r = Wθ − ŷ, then out = Wᵀr + ρ(θ − mean)
        let mut resid = [T::zero(); 8];
        let mut heap;
        let r: &mut [T] = if d <= resid.len() {
            &mut resid[..d]
        } else {
            heap = vec![T::zero(); d];
            &mut heap
        };
        w.matvec_into(theta, r);
        r.iter_mut().zip(&self.y_hat).for_each(|(ri, &y)| *ri = *ri - y);
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (i, &ri) in r.iter().enumerate() {
                acc = acc + w[(i, j)] * ri;
            }
            *o = acc + rho * (theta[j] - self.mean[j]);
        }
    }
}

/// Adds i.i.d. `N(0, noise_std²)` noise to every coordinate of `grad`.
/// `noise_std = 0` leaves it untouched and draws nothing.
pub fn perturb_in_place<T: Scalar, R: Rng + ?Sized>(grad: &mut [T], noise_std: T, rng: &mut R) {
    if noise_std == T::zero() {
        return;
    }
    for g in grad.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *g = *g + noise_std * T::lit(z);
    }
}

/// `base + z`, `z ~ N(0, noise_std² I)`.
pub fn perturbed_gradient<T: Scalar, R: Rng + ?Sized>(base: &[T], noise_std: T, rng: &mut R) -> Result<Vec<T>> {
    if !(noise_std >= T::zero()) {
        return Err(Error::InvalidParameter { name: "noise_std", reason: format!("must be >= 0, got {noise_std}") });
    }
    let mut out = base.to_vec();
    perturb_in_place(&mut out, noise_std, rng);
    Ok(out)
}

/// A vector field `θ ↦ ∇_μJ(μ)(θ)` over `ℝᵈ`.
#[derive(Clone)]
pub struct GradientField<T> {
    dim: usize,
    rule: Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>,
}

impl<T> fmt::Debug for GradientField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GradientField").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl<T: Scalar> GradientField<T> {
    pub fn new(dim: usize, rule: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static) -> Self {
        Self { dim, rule: Arc::new(rule) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, theta: &[T]) -> Vec<T> {
        (self.rule)(theta)
    }

    /// Field values at every particle, flattened in particle order.
    pub fn eval_on(&self, m: &ParticleMeasure<T>) -> Vec<T> {
        m.points().flat_map(|p| self.eval(p)).collect()
    }
}

/// `∇_μ 𝔼_μ[V] = ∇V`.
pub fn expected_value_gradient<T: Scalar>(
    dim: usize,
    v_grad: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
) -> GradientField<T> {
    GradientField::new(dim, v_grad)
}

/// `∇_μ Var_μ[x_i] = 2(θ_i − 𝔼_μ[θ_i]) e_i`.
pub fn variance_gradient<T: Scalar>(m: &ParticleMeasure<T>, i: usize) -> Result<GradientField<T>> {
    let d = m.dim();
    if i >= d {
        return Err(Error::IndexOutOfRange { index: i, dim: d });
    }
    let mi = m.mean()[i];
    Ok(GradientField::new(d, move |theta| {
        let mut g = vec![T::zero(); d];
        g[i] = T::lit(2.0) * (theta[i] - mi);
        g
    }))
}
