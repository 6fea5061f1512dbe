//! Run diagnostics and checkpoint metadata.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Diagnostics for the iterate `μ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow<T> {
    pub k: usize,
    /// `J(μ_k)`, when the true parameter is known.
    pub objective: Option<T>,
    /// `W2(μ_k, reference)` on the diagnostics subsample.
    pub w2_ref: Option<T>,
    pub mean: Vec<T>,
    /// Trace of the covariance of `μ_k`.
    pub cov_trace: T,
    /// `‖ξ_{k−1}‖_{L²(μ_{k−1})}`, the gradient that produced `μ_k`.
    pub grad_norm: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowTrace<T> {
    pub rows: Vec<TraceRow<T>>,
    /// Iteration index reached (`k` of the returned measure).
    pub final_k: usize,
    /// The observation stream ran out before `max_iters`.
    pub exhausted: bool,
    /// Iterations whose observation was rejected and skipped.
    pub skipped: Vec<usize>,
}

impl<T: Scalar> FlowTrace<T> {
    /// CSV with header `k,objective,w2_ref,mean_1..mean_d,grad_norm`; absent
    /// quantities are empty fields.
    pub fn write_csv<W: Write>(&self, dim: usize, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["k".to_string(), "objective".into(), "w2_ref".into()];
        header.extend((1..=dim).map(|j| format!("mean_{j}")));
        header.push("grad_norm".into());
        wtr.write_record(&header)?;
        let opt = |v: Option<T>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            let mut rec = vec![row.k.to_string(), opt(row.objective), opt(row.w2_ref)];
            rec.extend(row.mean.iter().map(|x| x.to_string()));
            rec.push(opt(row.grad_norm));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Sidecar written next to a particle checkpoint.
///
/// Format: one `key=value` per line, `#` comments allowed. Keys: `k`
/// (iterations applied), `seed`, `rng_counter` (next iteration index keying
/// the perturbation streams; equals `k`), plus free-form extras.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointMeta {
    pub k: usize,
    pub seed: u64,
    pub rng_counter: u64,
    pub extra: BTreeMap<String, String>,
}

impl CheckpointMeta {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, rng_counter: k as u64, extra: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.insert(key.to_string(), value.to_string());
        self
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k={}", self.k)?;
        writeln!(w, "seed={}", self.seed)?;
        writeln!(w, "rng_counter={}", self.rng_counter)?;
        for (key, value) in &self.extra {
            writeln!(w, "{key}={value}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut meta = CheckpointMeta::default();
        let mut seen = [false; 3];
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("checkpoint meta line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || Error::Parse(format!("checkpoint meta: invalid value `{value}` for `{key}`"));
            match key {
                "k" => {
                    meta.k = value.parse().map_err(|_| bad())?;
                    seen[0] = true;
                }
                "seed" => {
                    meta.seed = value.parse().map_err(|_| bad())?;
                    seen[1] = true;
                }
                "rng_counter" => {
                    meta.rng_counter = value.parse().map_err(|_| bad())?;
                    seen[2] = true;
                }
                _ => {
                    meta.extra.insert(key.to_string(), value.to_string());
                }
            }
        }
        if seen != [true; 3] {
            return Err(Error::Parse("checkpoint meta must define k, seed and rng_counter".into()));
        }
        Ok(meta)
    }
}
