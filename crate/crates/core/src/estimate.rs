//! Monte Carlo estimates and a deterministic parallel reduction.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Samples per reduction chunk. Chunks are the unit of parallel work and are
/// merged in index order, so results do not depend on the worker count.
pub const CHUNK: u64 = 4096;

/// A Monte Carlo mean with its standard error and the elementary scheme steps spent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub work: u64,
}

impl MCEstimate {
    pub fn work_per_sample(&self) -> f64 {
        self.work as f64 / self.n_samples as f64
    }
}

/// Componentwise running mean and second central moment (Welford), with the
/// pairwise merge of Chan et al.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Moments { count: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let k = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / k;
            *s += d * (v - *m);
        }
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for j in 0..self.dim() {
            let d = other.mean[j] - self.mean[j];
            self.mean[j] += d * nb / n;
            self.m2[j] += other.m2[j] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    /// Sample variance of component `j`.
    pub fn variance(&self, j: usize) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        (self.m2[j] / (self.count - 1) as f64).max(0.0)
    }

    pub fn stderr(&self, j: usize) -> f64 {
        (self.variance(j) / self.count as f64).sqrt()
    }

    pub fn estimate(&self, j: usize, work: u64) -> MCEstimate {
        MCEstimate { mean: self.mean[j], stderr: self.stderr(j), n_samples: self.count, work }
    }
}

/// Run `sample(k, out)` for `k = 0..n_samples` and collect componentwise
/// moments of the `dim` outputs. `sample` returns the work it spent.
pub fn run_samples<F>(n_samples: u64, dim: usize, sample: F) -> Result<(Moments, u64)>
where
    F: Fn(u64, &mut [f64]) -> Result<u64> + Sync,
{
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be positive"));
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let parts: Vec<(Moments, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Moments::new(dim);
            let mut out = vec![0.0; dim];
            let mut work = 0u64;
            for k in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                out.iter_mut().for_each(|v| *v = 0.0);
                work += sample(k, &mut out)?;
                acc.push(&out);
            }
            Ok((acc, work))
        })
        .collect::<Result<_>>()?;
    let mut total = Moments::new(dim);
    let mut work = 0;
    for (m, w) in &parts {
        total.merge(m);
        work += w;
    }
    Ok((total, work))
}

/// Scalar convenience wrapper around [`run_samples`].
pub fn estimate_mean<F>(n_samples: u64, sample: F) -> Result<MCEstimate>
where
    F: Fn(u64) -> Result<(f64, u64)> + Sync,
{
    let (m, work) = run_samples(n_samples, 1, |k, out| {
        let (v, w) = sample(k)?;
        out[0] = v;
        Ok(w)
    })?;
    Ok(m.estimate(0, work))
}
