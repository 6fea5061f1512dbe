//! Equal-weight particle measures.
//!
//! A [`ParticleMeasure`] is `(1/N) Σ δ_{x_i}` on `ℝᵈ`. Weights are implicit
//! and uniform; points are stored row-major in one flat buffer so that
//! per-particle sweeps can be split across threads without copying.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{self, Purpose};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleMeasure<T> {
    dim: usize,
    coords: Vec<T>,
}

impl<T: Scalar> ParticleMeasure<T> {
    /// Builds a measure from a flat row-major coordinate buffer.
    pub fn from_flat(dim: usize, coords: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter { name: "dim", reason: "must be at least 1".into() });
        }
        if coords.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if coords.len() % dim != 0 {
            return Err(Error::LengthMismatch {
                expected: (coords.len() / dim + 1) * dim,
                got: coords.len(),
            });
        }
        if let Some(pos) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index: pos / dim });
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points(points: &[Vec<T>]) -> Result<Self> {
        let dim = points.first().ok_or(Error::EmptyMeasure)?.len();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords)
    }

    /// `δ_x`.
    pub fn dirac(x: &[T]) -> Result<Self> {
        Self::from_flat(x.len(), x.to_vec())
    }

    /// `δ_x` represented with `n` coincident particles, so that it can be
    /// paired with an `n`-particle cloud in exact transport.
    pub fn replicated(x: &[T], n: usize) -> Result<Self> {
        let mut coords = Vec::with_capacity(n * x.len());
        for _ in 0..n {
            coords.extend_from_slice(x);
        }
        Self::from_flat(x.len(), coords)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of particles `N`.
    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, T> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[T] {
        &self.coords
    }

    pub fn into_flat(self) -> Vec<T> {
        self.coords
    }

    /// `f#μ`: maps every particle, preserving order. `f` writes the image of
    /// its first argument into the second.
    pub fn pushforward<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&[T], &mut [T]) + Sync,
    {
        let d = self.dim;
        let mut out = vec![T::zero(); self.coords.len()];
        out.par_chunks_mut(d)
            .zip(self.coords.par_chunks(d))
            .for_each(|(dst, src)| f(src, dst));
        if let Some(pos) = out.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidMap { index: pos / d });
        }
        Ok(Self { dim: d, coords: out })
    }

    /// Keeps the particles at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::IndexOutOfRange { index: i, dim: self.len() });
            }
            coords.extend_from_slice(self.point(i));
        }
        Self::from_flat(self.dim, coords)
    }

    pub fn mean(&self) -> Vec<T> {
        let mut acc = vec![T::zero(); self.dim];
        for p in self.points() {
            for (a, &x) in acc.iter_mut().zip(p) {
                *a = *a + x;
            }
        }
        let n = T::from_usize_lossy(self.len());
        acc.iter_mut().for_each(|a| *a = *a / n);
        acc
    }

    /// Population covariance `(1/N) Σ (x_i − x̄)(x_i − x̄)ᵀ`.
    pub fn covariance(&self) -> Matrix<T> {
        let d = self.dim;
        let m = self.mean();
        let mut c = Matrix::zeros(d);
        let mut centered = vec![T::zero(); d];
        for p in self.points() {
            for ((c_k, &x), &mk) in centered.iter_mut().zip(p).zip(&m) {
                *c_k = x - mk;
            }
            for i in 0..d {
                for j in i..d {
                    c[(i, j)] = c[(i, j)] + centered[i] * centered[j];
                }
            }
        }
        let n = T::from_usize_lossy(self.len());
        for i in 0..d {
            for j in i..d {
                let v = c[(i, j)] / n;
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        c
    }

    /// Population variance of `s(x) = Σ_j x_j`.
    pub fn variance_of_sum(&self) -> T {
        let n = T::from_usize_lossy(self.len());
        let sums: Vec<T> = self.points().map(|p| p.iter().copied().sum()).collect();
        let mean = sums.iter().copied().sum::<T>() / n;
        sums.iter().map(|&s| (s - mean) * (s - mean)).sum::<T>() / n
    }

    /// `(1/N) Σ ‖x_i − x̄‖²`, the trace of the covariance.
    pub fn total_variance(&self) -> T {
        let m = self.mean();
        let n = T::from_usize_lossy(self.len());
        self.points().map(|p| sq_dist(p, &m)).sum::<T>() / n
    }

    /// `(1/N) Σ ‖x_i‖²`.
    pub fn second_moment(&self) -> T {
        let n = T::from_usize_lossy(self.len());
        self.coords.iter().map(|&x| x * x).sum::<T>() / n
    }

    /// Nearest-rank `p`-quantile of `g` over the particles.
    pub fn percentile<G>(&self, g: G, p: f64) -> T
    where
        G: Fn(&[T]) -> T,
    {
        let mut values: Vec<T> = self.points().map(g).collect();
        percentile_in_place(&mut values, p)
    }

    /// `N` i.i.d. uniform draws in the closed box `[lo, hi]`.
    pub fn uniform_box(lo: &[T], hi: &[T], n: usize, seed: u64) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        if n == 0 {
            return Err(Error::EmptyMeasure);
        }
        for (j, (&l, &h)) in lo.iter().zip(hi).enumerate() {
            if !(l <= h) || !l.is_finite() || !h.is_finite() {
                return Err(Error::InvalidBox { coord: j, lo: l.to_f64_lossy(), hi: h.to_f64_lossy() });
            }
        }
        let d = lo.len();
        let mut coords = vec![T::zero(); n * d];
        coords.par_chunks_mut(d).enumerate().for_each(|(i, p)| {
            let mut r = rng::stream(seed, Purpose::Init, i as u64, 0);
            for ((x, &l), &h) in p.iter_mut().zip(lo).zip(hi) {
                let u = T::lit(r.random::<f64>());
                *x = (l + (h - l) * u).min(h);
            }
        });
        Self::from_flat(d, coords)
    }

    /// Writes the particle checkpoint CSV: header `x1,...,xd`, one row per
    /// particle, shortest round-trip decimal formatting.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record((1..=self.dim).map(|j| format!("x{j}")))?;
        for p in self.points() {
            wtr.write_record(p.iter().map(|x| x.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let dim = headers.len();
        for (j, h) in headers.iter().enumerate() {
            if h.trim() != format!("x{}", j + 1) {
                return Err(Error::Parse(format!("unexpected particle header column `{h}`")));
            }
        }
        let mut coords = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for field in rec.iter() {
                let v = field.trim().parse::<T>().map_err(|_| {
                    Error::Parse(format!("particle row {}: invalid number `{field}`", row + 1))
                })?;
                coords.push(v);
            }
        }
        Self::from_flat(dim, coords)
    }
}

#[inline]
pub(crate) fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Nearest-rank quantile: the value at 1-based rank `⌈p·N⌉` of the sorted
/// values, with `p = 0` mapping to the minimum. Sorts `values`.
pub fn percentile_in_place<T: Scalar>(values: &mut [T], p: f64) -> T {
    assert!(!values.is_empty(), "percentile of an empty set");
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    // p·N can land a hair above an integer (0.1·30 = 3.0000000000000004).
    let rank = (p.clamp(0.0, 1.0) * n as f64 - 1e-9).ceil().max(1.0) as usize;
    values[rank.min(n) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(points: &[&[f64]]) -> ParticleMeasure<f64> {
        ParticleMeasure::from_points(&points.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert_eq!(ParticleMeasure::<f64>::from_flat(2, vec![]), Err(Error::EmptyMeasure));
        assert_eq!(
            ParticleMeasure::from_flat(2, vec![0.0, 1.0, f64::NAN, 0.0]),
            Err(Error::NonFinite { index: 1 })
        );
        assert!(ParticleMeasure::from_flat(2, vec![0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn pushforward_examples() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(a.pushforward(|x, y| y.copy_from_slice(x)).unwrap(), a);
        let b = m(&[&[1.0, 0.0]]);
        let neg = b.pushforward(|x, y| y.iter_mut().zip(x).for_each(|(o, &v)| *o = -v)).unwrap();
        assert_eq!(neg, m(&[&[-1.0, 0.0]]));
        let c = m(&[&[0.0, 0.0], &[2.0, 2.0]]);
        let aff = c.pushforward(|x, y| y.iter_mut().zip(x).for_each(|(o, &v)| *o = v / 2.0 + 1.0)).unwrap();
        assert_eq!(aff, m(&[&[1.0, 1.0], &[2.0, 2.0]]));
    }

    #[test]
    fn pushforward_reports_offending_particle() {
        let a = m(&[&[1.0], &[0.0], &[2.0]]);
        let err = a.pushforward(|x, y| y[0] = 1.0 / x[0]).unwrap_err();
        assert_eq!(err, Error::InvalidMap { index: 1 });
    }

    #[test]
    fn moments_examples() {
        assert_eq!(m(&[&[0.0, 0.0], &[2.0, 2.0]]).mean(), vec![1.0, 1.0]);
        assert_eq!(m(&[&[5.0]]).mean(), vec![5.0]);
        assert_eq!(m(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0], &[0.0, -1.0]]).mean(), vec![0.0, 0.0]);

        assert_eq!(m(&[&[3.0, 7.0]]).covariance(), Matrix::zeros(2));
        assert_eq!(m(&[&[-1.0], &[1.0]]).covariance(), Matrix::from_diag(&[1.0]));
        let c = m(&[&[0.0, 0.0], &[1.0, 1.0]]).covariance();
        assert_eq!(c, Matrix::from_rows(&[vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap());

        assert_eq!(m(&[&[4.0, -2.0]]).variance_of_sum(), 0.0);
        assert_eq!(m(&[&[0.0, 0.0], &[1.0, 1.0]]).variance_of_sum(), 1.0);
        assert_eq!(m(&[&[1.0, -1.0], &[-1.0, 1.0]]).variance_of_sum(), 0.0);
        assert_eq!(m(&[&[1.0, -1.0], &[-1.0, 1.0]]).total_variance(), 2.0);
    }

    #[test]
    fn percentile_examples() {
        let single = m(&[&[3.0, 4.0]]);
        for p in [0.0, 0.3, 1.0] {
            assert_eq!(single.percentile(|x| x[0] + x[1], p), 7.0);
        }
        let ten = ParticleMeasure::from_flat(1, (1..=10).map(f64::from).collect()).unwrap();
        assert_eq!(ten.percentile(|x| x[0], 0.9), 9.0);
        assert_eq!(ten.percentile(|x| x[0], 0.1), 1.0);
        assert_eq!(ten.percentile(|x| x[0], 0.0), 1.0);
        assert_eq!(ten.percentile(|x| x[0], 1.0), 10.0);
        let thirty = ParticleMeasure::from_flat(1, (1..=30).map(f64::from).collect()).unwrap();
        assert_eq!(thirty.percentile(|x| x[0], 0.1), 3.0);
    }

    #[test]
    fn uniform_box_examples() {
        let c = 0.25;
        let degenerate = ParticleMeasure::uniform_box(&[c, c], &[c, c], 17, 3).unwrap();
        assert!(degenerate.points().all(|p| p == [c, c]));

        let hi = 8.0 / 60.0;
        let cloud = ParticleMeasure::uniform_box(&[0.0, 0.0], &[hi, hi], 1000, 11).unwrap();
        let sigma = hi / 12f64.sqrt();
        for mj in cloud.mean() {
            assert!((mj - hi / 2.0).abs() < 4.0 * sigma / 1000f64.sqrt());
        }
        assert!(cloud.as_flat().iter().all(|&x| (0.0..=hi).contains(&x)));

        let again = ParticleMeasure::uniform_box(&[0.0, 0.0], &[hi, hi], 1000, 11).unwrap();
        assert_eq!(cloud.as_flat(), again.as_flat());

        assert!(matches!(
            ParticleMeasure::uniform_box(&[0.0, 1.0], &[1.0, 0.5], 4, 0),
            Err(Error::InvalidBox { coord: 1, .. })
        ));
    }

    #[test]
    fn csv_roundtrip_is_byte_identical() {
        let cloud = ParticleMeasure::<f64>::uniform_box(&[-1.0, 0.0, 2.0], &[1.0, 1e-9, 3.0], 25, 5).unwrap();
        let mut first = Vec::new();
        cloud.write_csv(&mut first).unwrap();
        assert!(first.starts_with(b"x1,x2,x3\n"));
        let back = ParticleMeasure::<f64>::read_csv(first.as_slice()).unwrap();
        assert_eq!(back, cloud);
        let mut second = Vec::new();
        back.write_csv(&mut second).unwrap();
        assert_eq!(first, second);
    }

    fn cloud_strategy() -> impl Strategy<Value = ParticleMeasure<f64>> {
        (1usize..4, 1usize..20).prop_flat_map(|(d, n)| {
            prop::collection::vec(-100.0f64..100.0, d * n)
                .prop_map(move |c| ParticleMeasure::from_flat(d, c).unwrap())
        })
    }

    proptest! {
        #[test]
        fn pushforward_identity_and_composition(cloud in cloud_strategy()) {
            prop_assert_eq!(&cloud.pushforward(|x, y| y.copy_from_slice(x)).unwrap(), &cloud);
            let f = |x: &[f64], y: &mut [f64]| y.iter_mut().zip(x).for_each(|(o, &v)| *o = 0.5 * v - 1.0);
            let g = |x: &[f64], y: &mut [f64]| y.iter_mut().zip(x).for_each(|(o, &v)| *o = v * v);
            let two_step = cloud.pushforward(f).unwrap().pushforward(g).unwrap();
            let composed = cloud.pushforward(|x, y| {
                let mut tmp = vec![0.0; x.len()];
                f(x, &mut tmp);
                g(&tmp, y);
            }).unwrap();
            prop_assert_eq!(two_step, composed);
        }

        #[test]
        fn mean_commutes_with_affine_maps(cloud in cloud_strategy(), a in -3.0f64..3.0, b in -5.0f64..5.0) {
            let mapped = cloud.pushforward(|x, y| y.iter_mut().zip(x).for_each(|(o, &v)| *o = a * v + b)).unwrap();
            for (lhs, rhs) in mapped.mean().iter().zip(cloud.mean()) {
                let expect = a * rhs + b;
                prop_assert!((lhs - expect).abs() <= 1e-10 * (1.0 + expect.abs()) + 1e-12);
            }
        }

        #[test]
        fn second_order_statistics_are_consistent(cloud in cloud_strategy()) {
            let c = cloud.covariance();
            let ones = vec![1.0; cloud.dim()];
            let quad: f64 = ones.iter().zip(c.matvec(&ones)).map(|(a, b)| a * b).sum();
            let v = cloud.variance_of_sum();
            prop_assert!(v >= 0.0);
            prop_assert!((v - quad).abs() <= 1e-10 * quad.abs().max(1.0));
            prop_assert!(c.sym_eigen().values[0] >= -1e-12 * (1.0 + c.trace()));
        }

        #[test]
        fn percentile_is_monotone(cloud in cloud_strategy(), p in 0.0f64..1.0, q in 0.0f64..1.0) {
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            let g = |x: &[f64]| x.iter().sum::<f64>();
            prop_assert!(cloud.percentile(g, lo) <= cloud.percentile(g, hi));
        }
    }
}
