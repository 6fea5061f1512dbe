//! Stochastic projected Wasserstein gradient descent on particle clouds.
//!
//! One observation drives one iteration:
//!
//! 1. freeze the belief mean `𝔼_{μ_k}[θ]`,
//! 2. evaluate `ξ_k(x_i) = Wᵀ(W x_i − ŷ_k) + ρ(x_i − 𝔼_{μ_k}[θ])` per particle,
//! 3. optionally add zero-mean Gaussian noise to `ξ_k(x_i)`,
//! 4. move `x_i ↦ proj_Θ[x_i − τ ξ_k(x_i)]`.
//!
//! Steps 2–4 run in parallel over particles. Perturbation noise for
//! particle `i` at iteration `k` comes from the stream `(seed, k, i)`, so the
//! result does not depend on the number of worker threads.

mod bounds;
mod trace;

pub use bounds::{convergence_bound, lipschitz_norm_gap, validate_tau, StepBoundReport};
pub use trace::{CheckpointMeta, FlowTrace, TraceRow};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functionals::{perturb_in_place, StochasticGradient, StreamingLsObjective};
use crate::measures::ParticleMeasure;
use crate::rng::{self, Purpose};
use crate::scalar::Scalar;
use crate::sets::ConvexSet;
use crate::transport::w2_exact;

/// What to do with a malformed observation (wrong length or non-finite).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InvalidObservationPolicy {
    #[default]
    Abort,
    Skip,
}

#[derive(Debug, Clone)]
pub struct FlowConfig<T> {
    /// Step size `τ > 0`.
    pub tau: T,
    /// Global iteration cap: the run stops once `k` reaches this value.
    pub max_iters: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian gradient perturbation.
    pub perturb_std: T,
    /// Support constraint `Θ`.
    pub constraint: ConvexSet<T>,
    /// Record a trace row every this many iterations (and at the ends).
    pub diag_every: usize,
    /// Particles used for `W2` diagnostics; clamped to the cloud size.
    pub diag_subsample: usize,
    /// Use the full cloud for `W2` diagnostics.
    pub diag_full: bool,
    /// Reference measure for `W2` diagnostics. Defaults to `δ_{θ*}` when the
    /// objective knows `θ*`.
    pub reference: Option<ParticleMeasure<T>>,
    /// Iteration index of the initial measure (non-zero when resuming).
    pub start_iter: usize,
    /// Run even if `τ` is outside the admissible interval.
    pub force: bool,
    pub on_invalid: InvalidObservationPolicy,
}

/// Default size of the seeded diagnostics subsample.
pub const DEFAULT_DIAG_SUBSAMPLE: usize = 256;

impl<T: Scalar> FlowConfig<T> {
    pub fn new(tau: T, max_iters: usize, seed: u64, constraint: ConvexSet<T>) -> Self {
        Self {
            tau,
            max_iters,
            seed,
            perturb_std: T::zero(),
            constraint,
            diag_every: 1,
            diag_subsample: DEFAULT_DIAG_SUBSAMPLE,
            diag_full: false,
            reference: None,
            start_iter: 0,
            force: false,
            on_invalid: InvalidObservationPolicy::Abort,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > T::zero()) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter { name: "tau", reason: format!("must be > 0, got {}", self.tau) });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter { name: "max_iters", reason: "must be >= 1".into() });
        }
        if !(self.perturb_std >= T::zero()) || !self.perturb_std.is_finite() {
            return Err(Error::InvalidParameter {
                name: "perturb_std",
                reason: format!("must be >= 0, got {}", self.perturb_std),
            });
        }
        if self.diag_every == 0 {
            return Err(Error::InvalidParameter { name: "diag_every", reason: "must be >= 1".into() });
        }
        if self.diag_subsample == 0 {
            return Err(Error::InvalidParameter { name: "diag_subsample", reason: "must be >= 1".into() });
        }
        Ok(())
    }
}

/// One projected step: `x_i ↦ proj_Θ[x_i − τ ξ_i]` with `field_values`
/// flattened in particle order.
pub fn step<T: Scalar>(
    m: &ParticleMeasure<T>,
    field_values: &[T],
    tau: T,
    constraint: &ConvexSet<T>,
) -> Result<ParticleMeasure<T>> {
    let d = m.dim();
    if constraint.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: constraint.dim() });
    }
    if field_values.len() != m.as_flat().len() {
        return Err(Error::LengthMismatch { expected: m.as_flat().len(), got: field_values.len() });
    }
    let mut out = vec![T::zero(); field_values.len()];
    out.par_chunks_mut(d)
        .zip(m.as_flat().par_chunks(d).zip(field_values.par_chunks(d)))
        .for_each_init(
            || vec![T::zero(); d],
            |moved, (dst, (x, g))| {
                for ((mv, &xi), &gi) in moved.iter_mut().zip(x).zip(g) {
                    *mv = xi - tau * gi;
                }
                constraint.project_into(moved, dst);
            },
        );
    ParticleMeasure::from_flat(d, out)
}

/// Runs the flow over `stream`; see [`run_observed`].
pub fn run<T, I>(
    m0: &ParticleMeasure<T>,
    obj: &StreamingLsObjective<T>,
    stream: I,
    cfg: &FlowConfig<T>,
) -> Result<(ParticleMeasure<T>, FlowTrace<T>)>
where
    T: Scalar,
    I: IntoIterator<Item = Vec<T>>,
{
    run_observed(m0, obj, stream, cfg, |_, _| Ok(()))
}

/// Runs the flow from `m0` (iterate index `cfg.start_iter`) consuming one
/// observation per iteration until `cfg.max_iters` or the end of the stream.
/// `on_iterate(k, μ_k)` is called after every completed iteration.
pub fn run_observed<T, I, F>(
    m0: &ParticleMeasure<T>,
    obj: &StreamingLsObjective<T>,
    stream: I,
    cfg: &FlowConfig<T>,
    mut on_iterate: F,
) -> Result<(ParticleMeasure<T>, FlowTrace<T>)>
where
    T: Scalar,
    I: IntoIterator<Item = Vec<T>>,
    F: FnMut(usize, &ParticleMeasure<T>) -> Result<()>,
{
    cfg.validate()?;
    let d = m0.dim();
    if obj.dim() != d {
        return Err(Error::DimensionMismatch { expected: obj.dim(), got: d });
    }
    if cfg.constraint.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: cfg.constraint.dim() });
    }
    let report = StepBoundReport::for_objective(obj, cfg.tau);
    if !report.tau_valid && !cfg.force {
        return Err(Error::UnsafeStep { tau: cfg.tau.to_f64_lossy(), tau_max: report.tau_max.to_f64_lossy() });
    }
    let diagnostics = Diagnostics::prepare(m0, obj, cfg)?;

    let n = m0.len();
    let mut current = m0.clone();
    let mut k = cfg.start_iter;
    let mut trace = FlowTrace { rows: Vec::new(), final_k: k, exhausted: false, skipped: Vec::new() };
    trace.rows.push(diagnostics.row(k, &current, None)?);

    let mut observations = stream.into_iter();
    let mut next = vec![T::zero(); n * d];
    let mut sq_norms = vec![T::zero(); n];
    while k < cfg.max_iters {
        let Some(y_hat) = observations.next() else {
            trace.exhausted = true;
            break;
        };
        if let Some(reason) = observation_problem(&y_hat, d) {
            match cfg.on_invalid {
                InvalidObservationPolicy::Abort => return Err(Error::InvalidObservation { iteration: k, reason }),
                InvalidObservationPolicy::Skip => {
                    trace.skipped.push(k);
                    continue;
                }
            }
        }
        let mean = current.mean();
        let field = obj.stochastic_field(&y_hat, &mean)?;
        sweep(&current, &field, cfg, k, &mut next, &mut sq_norms);
        let grad_norm = (sq_norms.iter().copied().sum::<T>() / T::from_usize_lossy(n)).sqrt();
        current = ParticleMeasure::from_flat(d, std::mem::take(&mut next))?;
        next = vec![T::zero(); n * d];
        k += 1;
        on_iterate(k, &current)?;
        if k % cfg.diag_every == 0 || k == cfg.max_iters {
            trace.rows.push(diagnostics.row(k, &current, Some(grad_norm))?);
        }
    }
    if trace.rows.last().map(|r| r.k) != Some(k) {
        trace.rows.push(diagnostics.row(k, &current, None)?);
    }
    trace.final_k = k;
    Ok((current, trace))
}

fn observation_problem<T: Scalar>(y: &[T], d: usize) -> Option<String> {
    if y.len() != d {
        return Some(format!("expected {d} components, got {}", y.len()));
    }
    y.iter().position(|v| !v.is_finite()).map(|j| format!("component {j} is not finite"))
}

fn sweep<T: Scalar>(
    current: &ParticleMeasure<T>,
    field: &StochasticGradient<'_, T>,
    cfg: &FlowConfig<T>,
    k: usize,
    next: &mut [T],
    sq_norms: &mut [T],
) {
    let d = current.dim();
    next.par_chunks_mut(d)
        .zip(current.as_flat().par_chunks(d))
        .zip(sq_norms.par_iter_mut())
        .enumerate()
        .for_each_init(
            || (vec![T::zero(); d], vec![T::zero(); d]),
            |(grad, moved), (i, ((dst, x), sq))| {
                field.eval_into(x, grad);
                if cfg.perturb_std > T::zero() {
                    let mut r = rng::stream(cfg.seed, Purpose::Perturb, k as u64, i as u64);
                    perturb_in_place(grad, cfg.perturb_std, &mut r);
                }
                *sq = grad.iter().map(|&g| g * g).sum();
                for ((mv, &xi), &gi) in moved.iter_mut().zip(x).zip(grad.iter()) {
                    *mv = xi - cfg.tau * gi;
                }
                cfg.constraint.project_into(moved, dst);
            },
        );
}

/// Per-run diagnostics state: the fixed subsample and the matched
/// reference cloud.
struct Diagnostics<'a, T> {
    obj: &'a StreamingLsObjective<T>,
    indices: Option<Vec<usize>>,
    reference: Option<ParticleMeasure<T>>,
}

impl<'a, T: Scalar> Diagnostics<'a, T> {
    fn prepare(m0: &ParticleMeasure<T>, obj: &'a StreamingLsObjective<T>, cfg: &FlowConfig<T>) -> Result<Self> {
        let n = m0.len();
        let indices = if cfg.diag_full || cfg.diag_subsample >= n {
            None
        } else {
            Some(rng::subsample_indices(cfg.seed, 0, n, cfg.diag_subsample))
        };
        let size = indices.as_ref().map_or(n, Vec::len);
        let reference = match (&cfg.reference, obj.theta_star()) {
            (Some(r), _) => Some(r.clone()),
            (None, Some(ts)) => Some(ParticleMeasure::dirac(ts)?),
            (None, None) => None,
        };
        let reference = match reference {
            None => None,
            Some(r) if r.dim() != m0.dim() => {
                return Err(Error::DimensionMismatch { expected: m0.dim(), got: r.dim() })
            }
            Some(r) if r.len() == 1 => Some(ParticleMeasure::replicated(r.point(0), size)?),
            Some(r) if r.len() == n => match &indices {
                Some(idx) => Some(r.select(idx)?),
                None => Some(r),
            },
            Some(r) if r.len() == size => Some(r),
            Some(r) => return Err(Error::UnequalCounts { left: size, right: r.len() }),
        };
        Ok(Self { obj, indices, reference })
    }

    fn row(&self, k: usize, m: &ParticleMeasure<T>, grad_norm: Option<T>) -> Result<TraceRow<T>> {
        let objective = match self.obj.theta_star() {
            Some(_) => Some(self.obj.evaluate(m)?),
            None => None,
        };
        let w2_ref = match &self.reference {
            Some(r) => {
                let sub = match &self.indices {
                    Some(idx) => m.select(idx)?,
                    None => m.clone(),
                };
                Some(w2_exact(&sub, r)?.0)
            }
            None => None,
        };
        Ok(TraceRow { k, objective, w2_ref, mean: m.mean(), cov_trace: m.total_variance(), grad_norm })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn paper_objective(sigma_w2: f64) -> StreamingLsObjective<f64> {
        StreamingLsObjective::new(Matrix::from_diag(&[-5.0, 5.0]), 0.1, Some(vec![2.0 / 60.0, 5.0 / 60.0]), sigma_w2)
            .unwrap()
    }

    #[test]
    fn step_examples() {
        let orthant = ConvexSet::nonneg_orthant(2).unwrap();
        let m = ParticleMeasure::from_points(&[vec![-1.0, 2.0], vec![0.5, 0.5]]).unwrap();
        assert_eq!(step(&m, &[0.0; 4], 0.3, &orthant).unwrap(), orthant.project_measure(&m).unwrap());

        let single = ParticleMeasure::from_points(&[vec![0.1, 0.1]]).unwrap();
        assert_eq!(step(&single, &[1.0, 0.0], 0.5, &orthant).unwrap().point(0), &[0.0, 0.1]);

        // One particle, quadratic field, no constraint: plain gradient descent.
        let all = ConvexSet::all(1).unwrap();
        let mut x = ParticleMeasure::from_flat(1, vec![3.0]).unwrap();
        let mut plain = 3.0;
        for _ in 0..5 {
            let g = x.point(0)[0] - 1.0;
            x = step(&x, &[g], 0.2, &all).unwrap();
            plain -= 0.2 * (plain - 1.0);
            assert_eq!(x.point(0)[0], plain);
        }

        assert!(step(&m, &[0.0; 3], 0.1, &orthant).is_err());
    }

    #[test]
    fn empty_stream_returns_initial_measure() {
        let obj = paper_objective(0.0);
        let m0 = ParticleMeasure::uniform_box(&[0.0, 0.0], &[0.1, 0.1], 10, 1).unwrap();
        let cfg = FlowConfig::new(0.01, 50, 1, ConvexSet::nonneg_orthant(2).unwrap());
        let (m, trace) = run(&m0, &obj, Vec::<Vec<f64>>::new(), &cfg).unwrap();
        assert_eq!(m, m0);
        assert_eq!(trace.final_k, 0);
        assert!(trace.exhausted);
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.rows[0].grad_norm, None);
    }

    #[test]
    fn unsafe_step_is_refused_unless_forced() {
        let obj = paper_objective(0.0);
        let m0 = ParticleMeasure::dirac(&[0.0, 0.0]).unwrap();
        let mut cfg = FlowConfig::new(0.02, 3, 1, ConvexSet::nonneg_orthant(2).unwrap());
        let stream = vec![obj.clean_observation().unwrap(); 3];
        assert!(matches!(run(&m0, &obj, stream.clone(), &cfg), Err(Error::UnsafeStep { .. })));
        cfg.force = true;
        assert!(run(&m0, &obj, stream, &cfg).is_ok());
    }

    #[test]
    fn invalid_observation_policies() {
        let obj = paper_objective(0.0);
        let m0 = ParticleMeasure::dirac(&[0.0, 0.0]).unwrap();
        let clean = obj.clean_observation().unwrap();
        let stream = vec![clean.clone(), vec![f64::NAN, 0.0], clean.clone()];
        let mut cfg = FlowConfig::new(0.01, 3, 1, ConvexSet::nonneg_orthant(2).unwrap());
        assert!(matches!(
            run(&m0, &obj, stream.clone(), &cfg),
            Err(Error::InvalidObservation { iteration: 1, .. })
        ));
        cfg.on_invalid = InvalidObservationPolicy::Skip;
        let (_, trace) = run(&m0, &obj, stream, &cfg).unwrap();
        assert_eq!(trace.skipped, vec![1]);
        assert_eq!(trace.final_k, 2);
        assert!(trace.exhausted);
    }

    #[test]
    fn noise_free_run_contracts_at_the_linear_rate() {
        let obj = paper_objective(0.0);
        let ts = obj.theta_star().unwrap().to_vec();
        let m0 = ParticleMeasure::uniform_box(&[0.0, 0.0], &[8.0 / 60.0, 8.0 / 60.0], 64, 5).unwrap();
        let target = ParticleMeasure::replicated(&ts, 64).unwrap();
        let w0 = w2_exact(&m0, &target).unwrap().0;
        let tau: f64 = 0.01;
        let rate: f64 = 1.0 - 25.0 * tau;
        let steps = ((1e-6 / w0).ln() / rate.ln()).ceil() as usize;
        let cfg = FlowConfig::new(tau, steps, 1, ConvexSet::nonneg_orthant(2).unwrap());
        let stream = vec![obj.clean_observation().unwrap(); steps];
        let (m, trace) = run(&m0, &obj, stream, &cfg).unwrap();
        assert_eq!(trace.final_k, steps);
        assert!(w2_exact(&m, &target).unwrap().0 < 1e-6);
        for pair in trace.rows.windows(2) {
            let (a, b) = (pair[0].w2_ref.unwrap(), pair[1].w2_ref.unwrap());
            assert!(b <= rate * a * (1.0 + 1e-8) + 1e-15, "{a} -> {b}");
        }
    }

    #[test]
    fn resuming_reproduces_the_uninterrupted_run() {
        let obj = paper_objective(0.04);
        let m0 = ParticleMeasure::uniform_box(&[0.0, 0.0], &[0.2, 0.2], 100, 9).unwrap();
        let clean = obj.clean_observation().unwrap();
        let stream: Vec<Vec<f64>> = (0..12).map(|k| vec![clean[0] + 0.01 * k as f64, clean[1] - 0.02]).collect();
        let mut cfg = FlowConfig::new(0.01, 12, 77, ConvexSet::nonneg_orthant(2).unwrap());
        cfg.perturb_std = 0.02;
        let (full, _) = run(&m0, &obj, stream.clone(), &cfg).unwrap();

        let mut snapshot = None;
        run_observed(&m0, &obj, stream.clone(), &cfg, |k, m| {
            if k == 5 {
                snapshot = Some(m.clone());
            }
            Ok(())
        })
        .unwrap();
        let mut resumed_cfg = cfg.clone();
        resumed_cfg.start_iter = 5;
        let (resumed, trace) =
            run(&snapshot.unwrap(), &obj, stream.into_iter().skip(5), &resumed_cfg).unwrap();
        assert_eq!(trace.rows[0].k, 5);
        assert_eq!(resumed.as_flat(), full.as_flat());
    }

    #[test]
    fn diagnostics_use_a_fixed_subsample() {
        let obj = paper_objective(0.0);
        let m0 = ParticleMeasure::uniform_box(&[0.0, 0.0], &[0.2, 0.2], 300, 2).unwrap();
        let mut cfg = FlowConfig::new(0.01, 4, 3, ConvexSet::nonneg_orthant(2).unwrap());
        cfg.diag_every = 2;
        let (_, trace) = run(&m0, &obj, vec![obj.clean_observation().unwrap(); 4], &cfg).unwrap();
        assert_eq!(trace.rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![0, 2, 4]);
        assert!(trace.rows.iter().all(|r| r.w2_ref.is_some() && r.objective.is_some()));

        cfg.reference = Some(ParticleMeasure::uniform_box(&[0.0, 0.0], &[1.0, 1.0], 7, 2).unwrap());
        assert!(matches!(
            run(&m0, &obj, vec![obj.clean_observation().unwrap(); 4], &cfg),
            Err(Error::UnequalCounts { .. })
        ));
    }
}
