//! Exact quadratic optimal transport between equal-weight particle clouds.
//!
//! With uniform weights and equal counts an optimal plan is a permutation,
//! so `W2²` is a linear assignment problem. We solve it with the
//! shortest-augmenting-path Hungarian method (O(N³)) on a double-precision
//! cost matrix. Gaussian diagnostics (Bures distance, Gelbrich bound) only
//! need first and second moments.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measures::{sq_dist, ParticleMeasure};
use crate::scalar::Scalar;

/// Largest particle count accepted by [`w2_exact`]. Larger clouds should be
/// subsampled (the flow diagnostics default to 256 particles).
pub const MAX_EXACT_PARTICLES: usize = 4096;

/// Optimal coupling between two `N`-particle clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// `assignment[i] = j` sends source particle `i` to target particle `j`.
    pub assignment: Vec<usize>,
    /// `(1/N) Σ ‖x_i − y_{π(i)}‖²`.
    pub cost: f64,
}

/// Exact `W2(m, n)` and an optimal permutation plan.
pub fn w2_exact<T: Scalar>(m: &ParticleMeasure<T>, n: &ParticleMeasure<T>) -> Result<(T, TransportPlan)> {
    check_pair(m, n)?;
    let size = m.len();
    if size > MAX_EXACT_PARTICLES {
        return Err(Error::SizeCap { n: size, cap: MAX_EXACT_PARTICLES });
    }

    // A cloud of coincident points makes every permutation optimal.
    if is_single_point(n) || is_single_point(m) {
        let assignment: Vec<usize> = (0..size).collect();
        let cost = plan_cost(m, n, &assignment);
        return Ok((T::lit(cost.sqrt()), TransportPlan { assignment, cost }));
    }

    let costs: Vec<f64> = (0..size)
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = m.point(i);
            (0..size).map(move |j| sq_dist_f64(x, n.point(j)))
        })
        .collect();
    let assignment = solve_assignment(size, &costs);
    let cost = plan_cost(m, n, &assignment);
    Ok((T::lit(cost.max(0.0).sqrt()), TransportPlan { assignment, cost }))
}

/// `W2` in one dimension via the monotone (sorted) coupling.
pub fn w2_1d<T: Scalar>(m: &ParticleMeasure<T>, n: &ParticleMeasure<T>) -> Result<T> {
    if m.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: m.dim() });
    }
    check_pair(m, n)?;
    let sorted = |c: &ParticleMeasure<T>| {
        let mut v: Vec<f64> = c.as_flat().iter().map(|x| x.to_f64_lossy()).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        v
    };
    let (a, b) = (sorted(m), sorted(n));
    let cost = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    Ok(T::lit(cost.sqrt()))
}

/// Bures distance `√tr(S1 + S2 − 2 (S1^{1/2} S2 S1^{1/2})^{1/2})` between PSD
/// matrices.
pub fn bures_distance<T: Scalar>(s1: &Matrix<T>, s2: &Matrix<T>) -> Result<T> {
    if s1.dim() != s2.dim() {
        return Err(Error::DimensionMismatch { expected: s1.dim(), got: s2.dim() });
    }
    // Direct form min_Q ‖S1^{1/2} − S2^{1/2} Q‖_F over orthogonal Q; avoids
    // the cancellation in tr S1 + tr S2 − 2 tr(S1^{1/2} S2 S1^{1/2})^{1/2}.
    let tol = T::tol(1e-10);
    let x = s1.psd_sqrt(tol)?;
    let y = s2.psd_sqrt(tol)?;
    let svd = x.matmul(&y).svd();
    let q = svd.v.matmul(&svd.u.transpose());
    Ok(x.add(&y.matmul(&q).scale(-T::one())).frobenius())
}

/// Gelbrich lower bound `√(‖m_μ − m_ν‖² + d_B(S_μ, S_ν)²) ≤ W2(μ, ν)`.
pub fn gelbrich_lower_bound<T: Scalar>(m: &ParticleMeasure<T>, n: &ParticleMeasure<T>) -> Result<T> {
    if m.dim() != n.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: n.dim() });
    }
    let mean_gap = sq_dist(&m.mean(), &n.mean());
    let b = bures_distance(&m.covariance(), &n.covariance())?;
    Ok((mean_gap + b * b).sqrt())
}

fn check_pair<T: Scalar>(m: &ParticleMeasure<T>, n: &ParticleMeasure<T>) -> Result<()> {
    if m.dim() != n.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: n.dim() });
    }
    if m.len() != n.len() {
        return Err(Error::UnequalCounts { left: m.len(), right: n.len() });
    }
    Ok(())
}

fn is_single_point<T: Scalar>(c: &ParticleMeasure<T>) -> bool {
    let first = c.point(0);
    c.points().all(|p| p == first)
}

#[inline]
fn sq_dist_f64<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum()
}

fn plan_cost<T: Scalar>(m: &ParticleMeasure<T>, n: &ParticleMeasure<T>, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| sq_dist_f64(m.point(i), n.point(j)))
        .sum::<f64>()
        / assignment.len() as f64
}

/// Minimum-cost perfect matching on a dense `n × n` row-major cost matrix.
/// Returns `assignment[row] = column`.
///
/// Rows are inserted one at a time; each insertion runs a Dijkstra-like
/// search over reduced costs `c(i, j) − u(i) − v(j)` and augments along the
/// shortest path, keeping the potentials dual-feasible.
pub fn solve_assignment(n: usize, costs: &[f64]) -> Vec<usize> {
    assert_eq!(costs.len(), n * n, "cost matrix must be n x n");
    if n == 0 {
        return Vec::new();
    }
    // 1-based columns with a virtual column 0 holding the row being inserted.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![f64::INFINITY; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let row = &costs[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[row_of_col[j] - 1] = j - 1;
    }
    assignment
}
