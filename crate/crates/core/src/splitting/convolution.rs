//! Gaussian convolution `f -> f * gamma_{d^theta}` and the resulting
//! density estimates.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::estimate::{estimate_mean, MCEstimate};
use crate::order::OrderParams;
use crate::random_grid::{estimate_qhat_moments, EstimatorOptions};
use crate::rng::CounterRng;
use crate::scheme::{Buf, PathKey, SchemeSemigroup};

const BLUR_TAG: u64 = 0x626c_7572;

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::invalid(format!("convolution exponent must be positive, got {theta}")));
    }
    Ok(())
}

/// Centered Gaussian density with covariance `s^2 I` at `u`.
pub fn gaussian_kernel(s: f64, u: &[f64]) -> f64 {
    let r2: f64 = u.iter().map(|v| v * v).sum();
    (-(r2) / (2.0 * s * s)).exp() / (2.0 * PI * s * s).powf(u.len() as f64 / 2.0)
}

/// `E f(X_t + d^theta G)` under the plain scheme on `sg.grid`, `G` standard Gaussian.
pub fn convolved_expectation<F>(
    sg: &SchemeSemigroup,
    theta: f64,
    x0: &[f64],
    t: f64,
    f: F,
    n_samples: u64,
    seed: u64,
) -> Result<MCEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_theta(theta)?;
    if x0.len() != sg.dim() {
        return Err(Error::DimensionMismatch { expected: sg.dim(), found: x0.len() });
    }
    let level = sg.grid.level();
    let steps = sg
        .grid
        .index_of(level, t)
        .ok_or(Error::Misaligned { level, start: 0.0, end: t })?;
    let scale = sg.grid.step().powf(theta);
    estimate_mean(n_samples, |k| {
        let mut x: Buf = SmallVec::from_slice(x0);
        let work = sg.advance(&mut x, level, 0, steps, &PathKey::new(seed, k))?;
        let mut rng = CounterRng::from_words(&[seed, k, BLUR_TAG]);
        for v in x.iter_mut() {
            *v += scale * rng.sample::<f64, _>(StandardNormal);
        }
        Ok((f(&x), work))
    })
}

/// Density of `Qhat` blurred by `gamma_{d^theta}`, `d = T/n`, on a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub n: u32,
    pub nu: u32,
    pub theta: f64,
    pub y: Vec<Vec<f64>>,
    pub density: Vec<f64>,
    pub stderr: Vec<f64>,
    pub work_per_sample: f64,
}

impl DensityTable {
    /// `(sup |density - oracle|, stderr at the maximizer)`.
    pub fn sup_error<O: Fn(&[f64]) -> f64>(&self, oracle: O) -> (f64, f64) {
        self.y
            .iter()
            .zip(&self.density)
            .zip(&self.stderr)
            .map(|((y, d), s)| ((d - oracle(y)).abs(), *s))
            .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a })
    }
}

/// `(Qhat^{nu} (gamma_{d^theta}(y - .)))(x0)` for each `y`, by the particle estimator.
/// With `nu <= 1` this is the plain scheme.
#[allow(clippy::too_many_arguments)]
pub fn convolved_density(
    params: &OrderParams,
    sg: &SchemeSemigroup,
    theta: f64,
    x0: &[f64],
    y: &[Vec<f64>],
    n_samples: u64,
    seed: u64,
    options: EstimatorOptions,
) -> Result<DensityTable> {
    check_theta(theta)?;
    if let Some(p) = y.iter().find(|p| p.len() != sg.dim()) {
        return Err(Error::DimensionMismatch { expected: sg.dim(), found: p.len() });
    }
    let scale = (params.grid.horizon() / params.n() as f64).powf(theta);
    let (m, work) = estimate_qhat_moments(
        params,
        sg,
        x0,
        y.len(),
        |x, out| {
            let mut u: Buf = SmallVec::from_elem(0.0, x.len());
            for (o, p) in out.iter_mut().zip(y) {
                for (k, v) in u.iter_mut().enumerate() {
                    *v = p[k] - x[k];
                }
                *o = gaussian_kernel(scale, &u);
            }
        },
        n_samples,
        seed,
        options,
    )?;
    Ok(DensityTable {
        n: params.n(),
        nu: params.nu,
        theta,
        y: y.to_vec(),
        density: m.mean.clone(),
        stderr: (0..y.len()).map(|j| m.stderr(j)).collect(),
        work_per_sample: work as f64 / m.count as f64,
    })
}

/// One row of a density convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRow {
    pub n: u32,
    pub nu: u32,
    pub sup_error: f64,
    /// Standard error at the maximizing point.
    pub stderr: f64,
    pub work_per_sample: f64,
}

/// Sup-norm density error against `oracle` for each `n`, Euler orders.
#[allow(clippy::too_many_arguments)]
pub fn density_study<O>(
    sg: &SchemeSemigroup,
    nu: u32,
    theta: f64,
    x0: &[f64],
    y: &[Vec<f64>],
    oracle: O,
    n_list: &[u32],
    n_samples: u64,
    seed: u64,
    options: EstimatorOptions,
) -> Result<Vec<DensityRow>>
where
    O: Fn(&[f64]) -> f64,
{
    let horizon = sg.grid.horizon();
    n_list
        .iter()
        .map(|&n| {
            let params = OrderParams::euler(nu, horizon, n)?;
            let grid = crate::order::GridSpec::new(horizon, n)?;
            let table = convolved_density(&params, &sg.with_grid(grid), theta, x0, y, n_samples, seed, options)?;
            let (sup_error, stderr) = table.sup_error(&oracle);
            Ok(DensityRow { n, nu, sup_error, stderr, work_per_sample: table.work_per_sample })
        })
        .collect()
}
