//! The localization weight `Theta` and the regularized semigroup
//! `Q^{d, Theta}_t f = E[Theta f(X_t)] / E[Theta]`.

use smallvec::SmallVec;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{BumpFunction, SplitNoise};
use crate::error::{Error, Result};
use crate::estimate::{run_samples, MCEstimate};
use crate::rng::CounterRng;
use crate::scheme::{Buf, SchemeSemigroup};

/// Which factors of `Theta` are active. Turning both off gives `Theta = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalizationOptions {
    /// The indicator of `Lambda = {sum chi >= K m* / 2}`.
    pub lambda: bool,
    /// The bump factors `phi_{d^{-1/4}/2}(Z_s)`.
    pub bump: bool,
}

impl Default for LocalizationOptions {
    fn default() -> Self {
        LocalizationOptions { lambda: true, bump: true }
    }
}

impl LocalizationOptions {
    pub fn off() -> Self {
        LocalizationOptions { lambda: false, bump: false }
    }
}

/// `1_Lambda prod_s phi_{d^{-1/4}/2}(Z_s)` over the `K` steps in `(0, t]`.
///
/// `Lambda` counts successes: `sum chi >= K m* / 2`.
pub fn theta_weight(split: &SplitNoise, chi: &[bool], z: &[Vec<f64>]) -> f64 {
    theta_parts(split, chi, z, LocalizationOptions::default()).0
}

fn lambda_holds(m_star: f64, successes: usize, k: usize) -> bool {
    successes as f64 >= m_star * k as f64 / 2.0
}

/// `(Theta, Lambda holds)`.
fn theta_parts(split: &SplitNoise, chi: &[bool], z: &[Vec<f64>], opts: LocalizationOptions) -> (f64, bool) {
    let lambda = lambda_holds(split.m_star, chi.iter().filter(|&&c| c).count(), chi.len());
    if opts.lambda && !lambda {
        return (0.0, false);
    }
    let mut theta = 1.0;
    if opts.bump {
        let b = BumpFunction { v: split.delta.powf(-0.25) / 2.0 };
        for zs in z {
            theta *= b.eval(zs);
        }
    }
    (theta, lambda)
}

/// Hoeffding bound `P(not Lambda) <= exp(-m*^2 K / 2)` with `K = floor(t / d)`.
pub fn lambda_tail_bound(m_star: f64, steps: u64) -> f64 {
    (-m_star * m_star * steps as f64 / 2.0).exp()
}

/// `P(|Z| >= c)` for a standard Gaussian in `R^dim`.
pub fn gaussian_norm_tail(dim: usize, c: f64) -> f64 {
    ChiSquared::new(dim as f64).map(|d| d.sf(c * c)).unwrap_or(f64::NAN)
}

/// `P(Theta = 0) <= exp(-m*^2 K / 2) + K P(|Z| >= d^{-1/4})`.
pub fn theta_zero_bound_union(m_star: f64, steps: u64, tail: f64) -> f64 {
    lambda_tail_bound(m_star, steps) + steps as f64 * tail
}

/// `P(Theta = 0) <= exp(-m*^2 K / 2) + d^u M_{4(u+1)}`, from Markov's
/// inequality on each step; `moment` is `E|Z|^{4(u+1)}`.
pub fn theta_zero_bound_moment(m_star: f64, steps: u64, delta: f64, u: u32, moment: f64) -> f64 {
    lambda_tail_bound(m_star, steps) + delta.powi(u as i32) * moment
}

/// Output of [`regularized_expectation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedEstimate {
    /// Self-normalized `E[Theta f] / E[Theta]` with a delta-method standard error.
    pub value: MCEstimate,
    pub theta_mean: MCEstimate,
    /// Frequency of `not Lambda`, counted whatever the options.
    pub lambda_miss: MCEstimate,
    /// Frequency of `Theta = 0`.
    pub theta_zero: MCEstimate,
    pub steps: u64,
}

const SPLIT_TAG: u64 = 0x73_706c_6974;

/// `Q^{d, Theta}_t f(x0)`: the scheme driven by split noise, weighted by `Theta`.
#[allow(clippy::too_many_arguments)]
pub fn regularized_expectation<F>(
    sg: &SchemeSemigroup,
    split: &SplitNoise,
    x0: &[f64],
    t: f64,
    f: F,
    n_samples: u64,
    seed: u64,
    opts: LocalizationOptions,
) -> Result<RegularizedEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if x0.len() != sg.dim() {
        return Err(Error::DimensionMismatch { expected: sg.dim(), found: x0.len() });
    }
    if split.dim() != sg.noise.dim() {
        return Err(Error::DimensionMismatch { expected: sg.noise.dim(), found: split.dim() });
    }
    let level = sg.grid.level();
    let delta = sg.grid.step();
    if (split.delta - delta).abs() > 1e-12 * delta {
        return Err(Error::invalid(format!("split built for step {} but the grid step is {delta}", split.delta)));
    }
    let steps = sg
        .grid
        .index_of(level, t)
        .ok_or(Error::Misaligned { level, start: 0.0, end: t })?;
    let dim_z = split.dim();
    let sd = delta.sqrt();
    // columns: Theta, Theta f, Theta^2, Theta^2 f, Theta^2 f^2, not Lambda, Theta == 0
    let (m, work) = run_samples(n_samples, 7, |k, out| {
        let mut x: Buf = SmallVec::from_slice(x0);
        let mut next: Buf = SmallVec::from_elem(0.0, x0.len());
        let mut chi = Vec::with_capacity(steps as usize);
        let mut zs = Vec::with_capacity(steps as usize);
        let mut w = vec![0.0; dim_z];
        for j in 1..=steps {
            let mut rng = CounterRng::from_words(&[seed, k, SPLIT_TAG, j]);
            chi.push(split.sample(&mut rng, &mut w)?);
            let z: Vec<f64> = w.iter().map(|v| v / sd).collect();
            sg.step(&x, &z, delta, &mut next)?;
            x.copy_from_slice(&next);
            zs.push(z);
        }
        let (theta, lambda) = theta_parts(split, &chi, &zs, opts);
        let fx = f(&x);
        let t2 = theta * theta;
        out.copy_from_slice(&[
            theta,
            theta * fx,
            t2,
            t2 * fx,
            t2 * fx * fx,
            if lambda { 0.0 } else { 1.0 },
            if theta == 0.0 { 1.0 } else { 0.0 },
        ]);
        Ok(steps)
    })?;
    let mean_theta = m.mean[0];
    if mean_theta == 0.0 {
        return Err(Error::LocalizationAnnihilated);
    }
    let ratio = m.mean[1] / mean_theta;
    // E[(Theta (f - R))^2]
    let resid = (m.mean[4] - 2.0 * ratio * m.mean[3] + ratio * ratio * m.mean[2]).max(0.0);
    let n = m.count as f64;
    let value = MCEstimate { mean: ratio, stderr: (resid / n).sqrt() / mean_theta, n_samples: m.count, work };
    Ok(RegularizedEstimate {
        value,
        theta_mean: m.estimate(0, work),
        lambda_miss: m.estimate(5, work),
        theta_zero: m.estimate(6, work),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::order::GridSpec;
    use crate::scheme::{make_ou, GaussianNoise};
    use crate::splitting::build_split;

    fn setup(n: u32) -> (SchemeSemigroup, SplitNoise) {
        let grid = GridSpec::new(1.0, n).unwrap().with_level(1);
        let noise = Arc::new(GaussianNoise { dim: 1 });
        let sg = SchemeSemigroup::new(Arc::new(make_ou(1.0, 1.0)), noise.clone(), grid).unwrap();
        let split = build_split(noise, &[0.0], 1.0, 1.0 / n as f64).unwrap();
        (sg, split)
    }

    #[test]
    fn theta_examples() {
        let (_, s) = setup(16);
        let k = 16;
        let all = vec![true; k];
        let none = vec![false; k];
        let small = vec![vec![0.1]; k];
        assert_eq!(theta_weight(&s, &all, &small), 1.0);
        assert_eq!(theta_weight(&s, &none, &small), 0.0);
        let mut big = small.clone();
        big[3] = vec![2.5];
        // d^{-1/4} = 2, so |z| >= 2 kills the weight
        assert_eq!(theta_weight(&s, &all, &big), 0.0);
        // boundary of Lambda: K m* / 2 = 3.1 successes needed
        let mut four = vec![false; k];
        four[..4].iter_mut().for_each(|c| *c = true);
        assert_eq!(theta_weight(&s, &four, &small), 1.0);
        four[3] = false;
        assert_eq!(theta_weight(&s, &four, &small), 0.0);
    }

    #[test]
    fn self_normalized_constant_is_exact() {
        let (sg, s) = setup(8);
        let r = regularized_expectation(&sg, &s, &[1.0], 1.0, |_| 1.0, 5000, 3, Default::default()).unwrap();
        assert_eq!(r.value.mean, 1.0);
        assert_eq!(r.steps, 8);
    }

    #[test]
    fn bounds_are_ordered() {
        assert!(lambda_tail_bound(0.388, 32) < lambda_tail_bound(0.388, 8));
        let tail = gaussian_norm_tail(1, 1.96);
        assert!((tail - 0.05).abs() < 1e-3);
        assert!(theta_zero_bound_union(0.388, 8, tail) > lambda_tail_bound(0.388, 8));
        assert_eq!(theta_zero_bound_moment(0.5, 4, 0.25, 1, 105.0), lambda_tail_bound(0.5, 4) + 26.25);
    }

    #[test]
    fn mismatched_split_step_is_rejected() {
        let (sg, s) = setup(8);
        let r = regularized_expectation(&sg, &s.with_delta(0.5), &[1.0], 1.0, |x| x[0], 10, 1, Default::default());
        assert!(r.is_err());
    }
}
