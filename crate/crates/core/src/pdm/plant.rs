//! Euler-discretised second-order plant and trajectory least squares.
//!
//! `z̈ + a ż + b (z − r + ε) = 0` sampled at `Δt` gives
//!
//! ```text
//! x_{k+1} = [[1, Δt], [−Δt b, 1 − Δt a]] x_k + [0, Δt b]ᵀ (r + ε_k),   x = (z, ż)
//! ```

use rand::distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams<T> {
    /// Damping coefficient (1/s).
    pub a: T,
    /// Stiffness coefficient (1/s²).
    pub b: T,
    /// Constant reference.
    pub r: T,
    /// Sampling period (s).
    pub dt: T,
    /// Trajectory length (s).
    pub horizon: T,
    /// `ε_k` is uniform on `[−eps_half_width, eps_half_width]`.
    pub eps_half_width: T,
}

impl<T: Scalar> PlantParams<T> {
    pub fn new(a: T, b: T, r: T, dt: T, horizon: T, eps_half_width: T) -> Result<Self> {
        let positive = |name: &'static str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, reason: format!("must be finite and > 0, got {v}") })
            }
        };
        positive("a", a)?;
        positive("b", b)?;
        positive("dt", dt)?;
        positive("horizon", horizon)?;
        if !r.is_finite() {
            return Err(Error::InvalidParameter { name: "r", reason: "must be finite".into() });
        }
        if !(eps_half_width >= T::zero()) || !eps_half_width.is_finite() {
            return Err(Error::InvalidParameter {
                name: "eps_half_width",
                reason: format!("must be finite and >= 0, got {eps_half_width}"),
            });
        }
        let p = Self { a, b, r, dt, horizon, eps_half_width };
        let rho = p.spectral_radius();
        if !(rho < T::one()) {
            return Err(Error::Unstable { spectral_radius: rho.to_f64_lossy() });
        }
        Ok(p)
    }

    /// Spectral radius of the discrete state matrix.
    pub fn spectral_radius(&self) -> T {
        spectral_radius(self.a, self.b, self.dt)
    }

    /// Number of transitions, `⌊horizon/Δt⌋`.
    pub fn steps(&self) -> usize {
        let ratio = (self.horizon / self.dt).to_f64_lossy();
        let nearest = ratio.round();
        let n = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { ratio.floor() };
        n as usize
    }
}

/// Spectral radius of `[[1, Δt], [−Δt b, 1 − Δt a]]`.
pub fn spectral_radius<T: Scalar>(a: T, b: T, dt: T) -> T {
    let one = T::one();
    let tr = one + one - dt * a;
    let det = one - dt * a + dt * dt * b;
    let disc = tr * tr - T::lit(4.0) * det;
    if disc >= T::zero() {
        let s = disc.sqrt();
        ((tr + s) / T::lit(2.0)).abs().max(((tr - s) / T::lit(2.0)).abs())
    } else {
        det.abs().sqrt()
    }
}

/// Sampled states `x_0..x_n` and the reference applied at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub states: Vec<[T; 2]>,
    pub reference: Vec<T>,
}

impl<T> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Simulates `⌊horizon/Δt⌋ + 1` states from `x0` with the reference noise
/// drawn from the stream keyed by `seed`.
pub fn simulate_trajectory<T: Scalar>(p: &PlantParams<T>, x0: [T; 2], seed: u64) -> Result<Trajectory<T>> {
    let rho = p.spectral_radius();
    if !(rho < T::one()) {
        return Err(Error::Unstable { spectral_radius: rho.to_f64_lossy() });
    }
    let n = p.steps();
    let mut states = Vec::with_capacity(n + 1);
    let reference = vec![p.r; n + 1];
    let gain = p.dt * p.b;
    let damp = T::one() - p.dt * p.a;
    let mut rng = rng::stream(seed, Purpose::Trajectory, 0, 0);
    let h = p.eps_half_width.to_f64_lossy();
    let noise = Uniform::new_inclusive(-h, h).map_err(|e| Error::InvalidParameter {
        name: "eps_half_width",
        reason: e.to_string(),
    })?;
    let mut x = x0;
    states.push(x);
    for _ in 0..n {
        let eps = if h > 0.0 { T::lit(noise.sample(&mut rng)) } else { T::zero() };
        let z = x[0] + p.dt * x[1];
        let v = -gain * x[0] + damp * x[1] + gain * (p.r + eps);
        x = [z, v];
        states.push(x);
    }
    Ok(Trajectory { states, reference })
}

/// Least-squares estimate of `(a, b)` from a sampled trajectory.
///
/// Only the velocity row carries information:
/// `(ż_{k+1} − ż_k)/Δt = −a ż_k + b (r_k − z_k)` (+ `b ε_k`), solved through
/// the 2×2 normal equations.
pub fn ls_estimate<T: Scalar>(traj: &Trajectory<T>, dt: T) -> Result<[T; 2]> {
    if traj.states.len() < 3 || traj.reference.len() < traj.states.len() - 1 {
        return Err(Error::RankDeficient("need at least two transitions".into()));
    }
    let (mut g11, mut g12, mut g22, mut h1, mut h2) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    for (pair, &r) in traj.states.windows(2).zip(&traj.reference) {
        let (x, next) = (pair[0], pair[1]);
        let y = (next[1] - x[1]) / dt;
        let f1 = -x[1];
        let f2 = r - x[0];
        g11 = g11 + f1 * f1;
        g12 = g12 + f1 * f2;
        g22 = g22 + f2 * f2;
        h1 = h1 + f1 * y;
        h2 = h2 + f2 * y;
    }
    let det = g11 * g22 - g12 * g12;
    if !(det > T::tol(1e-12) * g11 * g22) || g11 == T::zero() || g22 == T::zero() {
        return Err(Error::RankDeficient(
            "trajectory does not excite both regressors; use a longer or richer trajectory".into(),
        ));
    }
    Ok([(g22 * h1 - g12 * h2) / det, (g11 * h2 - g12 * h1) / det])
}
