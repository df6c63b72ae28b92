//! Unbiased Monte Carlo estimation of `Qhat^{nu, T}_{0,T} f(x)` for scheme
//! backends.
//!
//! A sample is a finite signed particle system `{(w_k, X_k)}` with
//! `E sum_k w_k f(X_k) = Qhat f(x)`. One boosted step from a particle emits the
//! fine base particle plus, for each correction count `i`, the particles of one
//! uniformly drawn tuple `t_1 < ... < t_i` weighted by `C(n, i)`. At each
//! `t_j` every particle splits into a boosted branch (recursive, weight kept)
//! and a fine-step branch (weight negated); all particles then run on to the
//! end of the step with the fine scheme.

use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::estimate::{run_samples, MCEstimate, Moments};
use crate::order::{GridSpec, OrderParams};
use crate::report::{ConvergenceReport, ConvergenceRow};
use crate::rng::{mix, stream_key, CounterRng};
use crate::scheme::{Buf, PathKey, SchemeSemigroup};

/// Largest target order the estimator accepts.
pub const MAX_ORDER: u32 = 3;

/// A uniformly drawn correction tuple with its importance weight.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDraw {
    pub i: usize,
    /// Fine-step offsets in `1..=M`, strictly increasing.
    pub times: Vec<u64>,
    /// `C(M, i)`.
    pub weight: f64,
}

pub fn binomial(m: u64, i: u64) -> f64 {
    if i > m {
        return 0.0;
    }
    (0..i).fold(1.0, |acc, j| acc * (m - j) as f64 / (j + 1) as f64).round()
}

/// Uniform draw among the `C(M, i)` increasing `i`-tuples of `1..=M`.
pub fn sample_grid<R: Rng + ?Sized>(m: u64, i: usize, rng: &mut R) -> Result<GridDraw> {
    if i as u64 > m {
        return Err(Error::invalid(format!("cannot draw {i} correction times from {m} steps")));
    }
    let mut times: Vec<u64> = index::sample(rng, m as usize, i).into_iter().map(|t| t as u64 + 1).collect();
    times.sort_unstable();
    Ok(GridDraw { i, times, weight: binomial(m, i as u64) })
}

/// How the two branches of a difference factor share noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coupling {
    /// Branches share the path up to the split and nothing after.
    #[default]
    Independent,
    /// All particles of a sample read the same noise at each `(level, index)`,
    /// and each level's Gaussian increments are drawn conditionally on their
    /// coarser parent so that a block of `n` fine increments sums to
    /// `sqrt(n)` times the parent. Every particle still sees i.i.d. standard
    /// Gaussian noise, so expectations are unchanged. Gaussian noise only.
    Common,
}

/// One noise read, recorded when tracing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseUse {
    pub level: u32,
    pub index: u64,
    pub stream: u64,
}

#[derive(Debug, Clone)]
struct Particle {
    w: f64,
    x: Buf,
    key: PathKey,
    trace: Option<Vec<NoiseUse>>,
}

/// Per-sample state: the common-noise cache and counters.
struct SampleCtx<'a> {
    sg: &'a SchemeSemigroup,
    params: &'a OrderParams,
    coupling: Coupling,
    seed: u64,
    sample: u64,
    /// `(level, block) -> n * dim` Gaussian increments for Common coupling.
    blocks: HashMap<(u32, u64), Vec<f64>>,
    work: u64,
    tracing: bool,
}

const TAG_BASE: u64 = 0;
const TAG_BOOST: u64 = 1;
const TAG_FINE: u64 = 2;
const TAG_GRID: u64 = 0x6772_6964;
const TAG_COMMON: u64 = 0x636f_6d6d;

impl SampleCtx<'_> {
    fn dim_z(&self) -> usize {
        self.sg.noise.dim()
    }

    /// Gaussian increments of the level-`level` block `block` (common noise).
    fn block(&mut self, level: u32, block: u64) -> &[f64] {
        if !self.blocks.contains_key(&(level, block)) {
            let dim = self.dim_z();
            let n = self.params.n() as u64;
            let values = if level <= 1 {
                // level 1 is the coarsest simulated grid: one value per block
                let mut rng = CounterRng::from_words(&[self.seed, self.sample, TAG_COMMON, level as u64, block]);
                (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
            } else {
                let parent_index = block + 1;
                let parent = self.common_noise(level - 1, parent_index);
                let mut rng = CounterRng::from_words(&[self.seed, self.sample, TAG_COMMON, level as u64, block]);
                let mut w: Vec<f64> = (0..n as usize * dim).map(|_| rng.sample(StandardNormal)).collect();
                let scale = 1.0 / (n as f64).sqrt();
                for c in 0..dim {
                    let mean = (0..n as usize).map(|r| w[r * dim + c]).sum::<f64>() / n as f64;
                    for r in 0..n as usize {
                        w[r * dim + c] += parent[c] * scale - mean;
                    }
                }
                w
            };
            self.blocks.insert((level, block), values);
        }
        &self.blocks[&(level, block)]
    }

    /// Common noise for step `index` (1-based) of level `level`.
    fn common_noise(&mut self, level: u32, index: u64) -> Vec<f64> {
        let dim = self.dim_z();
        if level <= 1 {
            return self.block(level, index).to_vec();
        }
        let n = self.params.n() as u64;
        let b = (index - 1) / n;
        let r = ((index - 1) % n) as usize;
        self.block(level, b)[r * dim..(r + 1) * dim].to_vec()
    }

    /// Advance `p` by `steps` steps of `level` from grid index `from`.
    fn advance(&mut self, p: &mut Particle, level: u32, from: u64, steps: u64) -> Result<()> {
        let delta = self.sg.grid.step_at(level);
        let mut z: Buf = SmallVec::from_elem(0.0, self.dim_z());
        let mut next: Buf = SmallVec::from_elem(0.0, p.x.len());
        for k in from..from + steps {
            let index = k + 1;
            match self.coupling {
                Coupling::Independent => {
                    let mut rng = p.key.rng(level, index);
                    if let Some(t) = p.trace.as_mut() {
                        t.push(NoiseUse { level, index, stream: rng.key() });
                    }
                    self.sg.noise.sample(&mut rng, &mut z);
                }
                Coupling::Common => {
                    let v = self.common_noise(level, index);
                    if let Some(t) = p.trace.as_mut() {
                        t.push(NoiseUse { level, index, stream: stream_key(&[self.seed, self.sample, level as u64, index]) });
                    }
                    z.copy_from_slice(&v);
                }
            }
            self.sg.step(&p.x, &z, delta, &mut next)?;
            p.x.copy_from_slice(&next);
        }
        self.work += steps;
        Ok(())
    }

    /// Particles of `Qhat^{order, T/n^level}` over level step `start` applied to `p`.
    fn boosted(&mut self, order: u32, level: u32, start: u64, p: Particle, out: &mut Vec<Particle>) -> Result<()> {
        let n = self.params.n() as u64;
        let fine = level + 1;
        let fine_start = start * n;
        let m = self.params.m(level, order);

        let mut base = p.clone();
        base.key = p.key.child(TAG_BASE);
        self.advance(&mut base, fine, fine_start, n)?;
        out.push(base);

        for i in 1..m {
            let q = self.params.q(i, level, order)?;
            let key = p.key.child(mix(TAG_GRID, i as u64));
            let mut rng = CounterRng::from_words(&[self.seed, self.sample, key.path, level as u64, start, TAG_GRID]);
            let draw = sample_grid(n, i as usize, &mut rng)?;
            let mut live = vec![Particle { w: p.w * draw.weight, key, ..p.clone() }];
            let mut cursor = 0;
            for &t in &draw.times {
                let mut next = Vec::with_capacity(live.len() * 2);
                for mut particle in live {
                    self.advance(&mut particle, fine, fine_start + cursor, t - 1 - cursor)?;
                    let split = fine_start + t - 1;
                    let mut boost = particle.clone();
                    boost.key = particle.key.child(mix(TAG_BOOST, t));
                    self.boosted(q, fine, split, boost, &mut next)?;
                    let mut step = particle;
                    step.key = step.key.child(mix(TAG_FINE, t));
                    step.w = -step.w;
                    self.advance(&mut step, fine, split, 1)?;
                    next.push(step);
                }
                live = next;
                cursor = t;
            }
            for mut particle in live {
                self.advance(&mut particle, fine, fine_start + cursor, n - cursor)?;
                out.push(particle);
            }
        }
        Ok(())
    }
}

/// Options for [`estimate_qhat_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EstimatorOptions {
    pub coupling: Coupling,
}

fn check_inputs(params: &OrderParams, sg: &SchemeSemigroup, x0: &[f64], coupling: Coupling) -> Result<()> {
    if params.nu > MAX_ORDER {
        return Err(Error::invalid(format!("order {} exceeds the supported maximum {MAX_ORDER}", params.nu)));
    }
    if sg.grid.n() != params.n() || (sg.grid.horizon() - params.grid.horizon()).abs() > 1e-12 {
        return Err(Error::invalid("scheme grid and order parameters disagree on (T, n)"));
    }
    if x0.len() != sg.dim() {
        return Err(Error::DimensionMismatch { expected: sg.dim(), found: x0.len() });
    }
    if coupling == Coupling::Common && !sg.noise.name().starts_with("gaussian") {
        return Err(Error::invalid("common coupling requires Gaussian noise"));
    }
    Ok(())
}

fn sample_particles(
    params: &OrderParams,
    sg: &SchemeSemigroup,
    x0: &[f64],
    seed: u64,
    sample: u64,
    coupling: Coupling,
    tracing: bool,
) -> Result<(Vec<Particle>, u64)> {
    let mut ctx = SampleCtx {
        sg,
        params,
        coupling,
        seed,
        sample,
        blocks: HashMap::new(),
        work: 0,
        tracing,
    };
    let root = Particle {
        w: 1.0,
        x: SmallVec::from_slice(x0),
        key: PathKey::new(seed, sample),
        trace: ctx.tracing.then(Vec::new),
    };
    let mut out = Vec::new();
    ctx.boosted(params.nu, 0, 0, root, &mut out)?;
    Ok((out, ctx.work))
}

/// Componentwise estimate of `Qhat g(x0)` for vector-valued `g` with `dim` outputs.
#[allow(clippy::too_many_arguments)]
pub fn estimate_qhat_moments<G>(
    params: &OrderParams,
    sg: &SchemeSemigroup,
    x0: &[f64],
    dim: usize,
    g: G,
    n_samples: u64,
    seed: u64,
    options: EstimatorOptions,
) -> Result<(Moments, u64)>
where
    G: Fn(&[f64], &mut [f64]) + Sync,
{
    check_inputs(params, sg, x0, options.coupling)?;
    run_samples(n_samples, dim, |k, acc| {
        let (particles, work) = sample_particles(params, sg, x0, seed, k, options.coupling, false)?;
        let mut val = vec![0.0; dim];
        for p in &particles {
            g(&p.x, &mut val);
            for (a, v) in acc.iter_mut().zip(&val) {
                *a += p.w * v;
            }
        }
        Ok(work)
    })
}

/// `Qhat^{nu, T}_{0,T} f(x0)` with independent branches.
pub fn estimate_qhat<F>(params: &OrderParams, sg: &SchemeSemigroup, x0: &[f64], f: F, n_samples: u64, seed: u64) -> Result<MCEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    estimate_qhat_with(params, sg, x0, f, n_samples, seed, EstimatorOptions::default())
}

pub fn estimate_qhat_with<F>(
    params: &OrderParams,
    sg: &SchemeSemigroup,
    x0: &[f64],
    f: F,
    n_samples: u64,
    seed: u64,
    options: EstimatorOptions,
) -> Result<MCEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let (m, work) = estimate_qhat_moments(params, sg, x0, 1, |x, o| o[0] = f(x), n_samples, seed, options)?;
    Ok(m.estimate(0, work))
}

/// Final particles of one sample with the noise reads along each particle's path.
#[derive(Debug, Clone)]
pub struct ParticleTrace {
    pub weight: f64,
    pub state: Vec<f64>,
    pub path: u64,
    pub reads: Vec<NoiseUse>,
}

pub fn trace_sample(
    params: &OrderParams,
    sg: &SchemeSemigroup,
    x0: &[f64],
    seed: u64,
    sample: u64,
    coupling: Coupling,
) -> Result<(Vec<ParticleTrace>, u64)> {
    check_inputs(params, sg, x0, coupling)?;
    let (particles, work) = sample_particles(params, sg, x0, seed, sample, coupling, true)?;
    let traces = particles
        .into_iter()
        .map(|p| ParticleTrace { weight: p.w, state: p.x.to_vec(), path: p.key.path, reads: p.trace.unwrap_or_default() })
        .collect();
    Ok((traces, work))
}

/// Target order and base-scheme orders of a study; `n` varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyOrders {
    pub nu: u32,
    pub alpha: u32,
    pub beta: u32,
}

impl StudyOrders {
    pub fn euler(nu: u32) -> Self {
        StudyOrders { nu, alpha: 1, beta: 2 }
    }
}

/// Estimates `Qhat f(x0)` for each `n` and compares with `exact = P_T f(x0)`.
#[allow(clippy::too_many_arguments)]
pub fn weak_error_study<F>(
    orders: StudyOrders,
    sg: &SchemeSemigroup,
    x0: &[f64],
    f: F,
    exact: f64,
    n_list: &[u32],
    n_samples: u64,
    seed: u64,
    options: EstimatorOptions,
) -> Result<ConvergenceReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n_list.len() < 2 {
        return Err(Error::invalid(format!("a study needs at least 2 values of n, got {}", n_list.len())));
    }
    let horizon = sg.grid.horizon();
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let grid = GridSpec::new(horizon, n)?;
        let params = OrderParams::new(orders.alpha, orders.beta, orders.nu, grid)?;
        let est = estimate_qhat_with(&params, &sg.with_grid(grid), x0, &f, n_samples, seed, options)?;
        rows.push(ConvergenceRow::new(n, orders.nu, est.mean, est.stderr, exact, est.work_per_sample()));
    }
    Ok(ConvergenceReport::from_rows(rows))
}
