//! Splitting of a Lebesgue-lower-bounded noise, localization and
//! regularized semigroups.
//!
//! If the law of `Z` dominates `eps * Lebesgue` on the ball `B(z*, r*)`, then
//! `sqrt(d) Z` has the same law as `chi U + (1 - chi) V` with
//! `chi ~ Bernoulli(m*)`, `U` drawn from the smooth bump density around
//! `sqrt(d) z*` and `V` from the residual.

pub mod checks;
pub mod convolution;
pub mod localization;

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::scheme::NoiseLaw;

pub use checks::{invariant_checks, CheckRow};
pub use convolution::{convolved_density, convolved_expectation, density_study, DensityRow, DensityTable};
pub use localization::{
    lambda_tail_bound, regularized_expectation, theta_weight, theta_zero_bound_moment, theta_zero_bound_union,
    LocalizationOptions, RegularizedEstimate,
};

/// `phi_v(z)`: 1 on `|z| <= v`, `exp(1 - v^2 / (v^2 - (|z| - v)^2))` on
/// `v < |z| < 2v`, 0 beyond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpFunction {
    pub v: f64,
}

impl BumpFunction {
    pub fn new(v: f64) -> Result<Self> {
        if !(v > 0.0) {
            return Err(Error::invalid(format!("bump radius must be positive, got {v}")));
        }
        Ok(BumpFunction { v })
    }

    /// Value at radius `r = |z|`.
    #[inline]
    pub fn radial(&self, r: f64) -> f64 {
        let v = self.v;
        if r <= v {
            1.0
        } else if r < 2.0 * v {
            let s = r - v;
            (1.0 - v * v / (v * v - s * s)).exp()
        } else {
            0.0
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.radial(z.iter().map(|c| c * c).sum::<f64>().sqrt())
    }

    /// `d^q/dz^q ln phi_v(z)` in one dimension; zero outside `(v, 2v)` by convention.
    ///
    /// With `s = |z| - v`, `ln phi = 1 - v^2 / (v^2 - s^2)` and
    /// `d^q/ds^q` of it is `-(v q! / 2) ((v - s)^{-(q+1)} + (-1)^q (v + s)^{-(q+1)})`.
    pub fn log_derivative(&self, z: f64, q: u32) -> f64 {
        let v = self.v;
        let r = z.abs();
        if r <= v || r >= 2.0 * v {
            return 0.0;
        }
        let s = r - v;
        if q == 0 {
            return 1.0 - v * v / (v * v - s * s);
        }
        let fact: f64 = (1..=q).map(f64::from).product();
        let e = -(q as i32 + 1);
        let sign = if q.is_multiple_of(2) { 1.0 } else { -1.0 };
        let ds = -(v * fact / 2.0) * ((v - s).powi(e) + sign * (v + s).powi(e));
        // d/dz = sign(z) d/ds
        if z < 0.0 && q % 2 == 1 {
            -ds
        } else {
            ds
        }
    }
}

/// `phi_v(z)`.
pub fn bump(v: f64, z: &[f64]) -> f64 {
    BumpFunction { v }.eval(z)
}

/// `d^q/dz^q ln phi_v(z)` for scalar `z`.
pub fn bump_log_derivative(v: f64, z: f64, q: u32) -> f64 {
    BumpFunction { v }.log_derivative(z, q)
}

/// `max_z phi_v(z) |d^q ln phi_v(z)|^p` over `points` evenly spaced radii in `(v, 2v)`.
pub fn bump_log_bound(v: f64, q: u32, p: u32, points: usize) -> f64 {
    let b = BumpFunction { v };
    (1..points)
        .map(|k| {
            let z = v * (1.0 + k as f64 / points as f64);
            b.radial(z) * b.log_derivative(z, q).abs().powi(p as i32)
        })
        .fold(0.0, f64::max)
}

/// Surface area of the unit sphere in `R^n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    2.0 * PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0)
}

/// `int phi_v(z) dz` over `R^dim`, by radial reduction and double-exponential
/// quadrature on the shell `(v, 2v)` to absolute error `1e-12`.
pub fn bump_integral(v: f64, dim: usize) -> f64 {
    let area = unit_sphere_area(dim);
    let plateau = area * v.powi(dim as i32) / dim as f64;
    let b = BumpFunction { v };
    let shell = quadrature::double_exponential::integrate(|r| b.radial(r) * r.powi(dim as i32 - 1), v, 2.0 * v, 1e-12);
    plateau + area * shell.integral
}

/// Relative safety margin subtracted from the sampled density minimum.
pub const LOWER_BOUND_MARGIN: f64 = 1e-9;

fn ball_grid(z_star: &[f64], r_star: f64) -> Vec<Vec<f64>> {
    let dim = z_star.len();
    let per_axis = match dim {
        1 => 2001,
        2 => 201,
        3 => 41,
        _ => 11,
    };
    let mut points = Vec::new();
    let mut idx = vec![0usize; dim];
    loop {
        let p: Vec<f64> = idx
            .iter()
            .map(|&i| -r_star + 2.0 * r_star * i as f64 / (per_axis - 1) as f64)
            .collect();
        if p.iter().map(|c| c * c).sum::<f64>() <= r_star * r_star * (1.0 + 1e-12) {
            points.push(p.iter().zip(z_star).map(|(a, b)| a + b).collect());
        }
        let mut k = 0;
        loop {
            if k == dim {
                return with_shell(points, z_star, r_star);
            }
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Adds shell points along `+-` each axis and each diagonal.
fn with_shell(mut points: Vec<Vec<f64>>, z_star: &[f64], r_star: f64) -> Vec<Vec<f64>> {
    let dim = z_star.len();
    for mask in 0..(1u32 << dim) {
        let scale = r_star / (dim as f64).sqrt();
        points.push((0..dim).map(|k| z_star[k] + if mask >> k & 1 == 1 { scale } else { -scale }).collect());
    }
    for k in 0..dim {
        for s in [-1.0, 1.0] {
            let mut p = z_star.to_vec();
            p[k] += s * r_star;
            points.push(p);
        }
    }
    points
}

/// `eps*`: the density minimum over a deterministic grid of `B(z*, r*)`,
/// lowered by [`LOWER_BOUND_MARGIN`].
pub fn fit_lower_bound(noise: &dyn NoiseLaw, z_star: &[f64], r_star: f64) -> Result<f64> {
    if z_star.len() != noise.dim() {
        return Err(Error::DimensionMismatch { expected: noise.dim(), found: z_star.len() });
    }
    if !(r_star > 0.0) {
        return Err(Error::invalid(format!("r* must be positive, got {r_star}")));
    }
    let not_bounded = || Error::NotLowerBounded { z_star: z_star.to_vec(), r_star };
    let mut min = f64::INFINITY;
    for p in ball_grid(z_star, r_star) {
        let d = noise.density(&p).ok_or_else(not_bounded)?;
        min = min.min(d);
    }
    if !(min > 0.0) {
        return Err(not_bounded());
    }
    Ok(min * (1.0 - LOWER_BOUND_MARGIN))
}

/// A noise law with its splitting `sqrt(d) Z = chi U + (1 - chi) V`.
#[derive(Clone)]
pub struct SplitNoise {
    pub base: Arc<dyn NoiseLaw>,
    pub z_star: Vec<f64>,
    pub r_star: f64,
    pub eps_star: f64,
    pub m_star: f64,
    pub delta: f64,
}

impl std::fmt::Debug for SplitNoise {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SplitNoise")
            .field("base", &self.base.name())
            .field("z_star", &self.z_star)
            .field("r_star", &self.r_star)
            .field("eps_star", &self.eps_star)
            .field("m_star", &self.m_star)
            .field("delta", &self.delta)
            .finish()
    }
}

/// Proposals allowed per rejection draw before giving up.
const MAX_PROPOSALS: usize = 1_000_000;

pub fn build_split(noise: Arc<dyn NoiseLaw>, z_star: &[f64], r_star: f64, delta: f64) -> Result<SplitNoise> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {delta}")));
    }
    let eps_star = fit_lower_bound(noise.as_ref(), z_star, r_star)?;
    let m_star = eps_star * bump_integral(r_star / 2.0, z_star.len());
    if !(m_star > 0.0 && m_star < 1.0) {
        return Err(Error::Invariant(format!("splitting mass m* = {m_star} outside (0, 1)")));
    }
    Ok(SplitNoise { base: noise, z_star: z_star.to_vec(), r_star, eps_star, m_star, delta })
}

impl SplitNoise {
    pub fn dim(&self) -> usize {
        self.z_star.len()
    }

    /// The same split at another step size.
    pub fn with_delta(&self, delta: f64) -> Self {
        SplitNoise { delta, ..self.clone() }
    }

    fn bump(&self) -> BumpFunction {
        BumpFunction { v: self.r_star / 2.0 }
    }

    pub fn sample_chi(&self, rng: &mut CounterRng) -> bool {
        rng.random::<f64>() < self.m_star
    }

    /// `U = sqrt(d) (z* + W)` with `W` of density proportional to `phi_{r*/2}`,
    /// by rejection from the uniform law on `B(0, r*)`.
    pub fn sample_u(&self, rng: &mut CounterRng, out: &mut [f64]) -> Result<()> {
        let dim = self.dim();
        let b = self.bump();
        for _ in 0..MAX_PROPOSALS {
            let w = uniform_ball(rng, dim, self.r_star);
            if rng.random::<f64>() < b.eval(&w) {
                let sd = self.delta.sqrt();
                for k in 0..dim {
                    out[k] = sd * (self.z_star[k] + w[k]);
                }
                return Ok(());
            }
        }
        Err(Error::Invariant("U rejection sampler made no progress".into()))
    }

    /// Acceptance weight of a base-law proposal `z` for the residual `V`:
    /// `1 - eps* phi_{r*/2}(z - z*) / p_Z(z)`.
    pub fn v_acceptance(&self, z: &[f64]) -> Result<f64> {
        let shifted: Vec<f64> = z.iter().zip(&self.z_star).map(|(a, b)| a - b).collect();
        let bump = self.bump().eval(&shifted);
        if bump == 0.0 {
            return Ok(1.0);
        }
        let density = self.base.density(z).ok_or_else(|| Error::NotLowerBounded {
            z_star: self.z_star.clone(),
            r_star: self.r_star,
        })?;
        let a = 1.0 - self.eps_star * bump / density;
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::Invariant(format!("V acceptance weight {a} outside [0, 1] at z = {z:?}")));
        }
        Ok(a)
    }

    /// `V`, by rejection against the law of `sqrt(d) Z`.
    pub fn sample_v(&self, rng: &mut CounterRng, out: &mut [f64]) -> Result<()> {
        let dim = self.dim();
        let mut z = vec![0.0; dim];
        for _ in 0..MAX_PROPOSALS {
            self.base.sample(rng, &mut z);
            if rng.random::<f64>() < self.v_acceptance(&z)? {
                let sd = self.delta.sqrt();
                for k in 0..dim {
                    out[k] = sd * z[k];
                }
                return Ok(());
            }
        }
        Err(Error::Invariant("V rejection sampler made no progress".into()))
    }

    /// One draw of `sqrt(d) Z` through the splitting; returns `chi`.
    pub fn sample(&self, rng: &mut CounterRng, out: &mut [f64]) -> Result<bool> {
        let chi = self.sample_chi(rng);
        if chi {
            self.sample_u(rng, out)?;
        } else {
            self.sample_v(rng, out)?;
        }
        Ok(chi)
    }
}

fn uniform_ball(rng: &mut CounterRng, dim: usize, r: f64) -> Vec<f64> {
    if dim == 1 {
        return vec![r * (2.0 * rng.random::<f64>() - 1.0)];
    }
    let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = r * rng.random::<f64>().powf(1.0 / dim as f64);
    g.iter().map(|v| v * radius / norm).collect()
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at level 1%.
pub fn ks_critical_1pct(na: usize, nb: usize) -> f64 {
    1.628 * ((na + nb) as f64 / (na as f64 * nb as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::{GaussianNoise, RademacherNoise, UniformNoise};

    #[test]
    fn bump_examples() {
        assert_eq!(bump(1.0, &[0.0]), 1.0);
        assert!((bump(1.0, &[1.5]) - (-1.0f64 / 3.0).exp()).abs() < 1e-15);
        assert!((bump(1.0, &[1.5]) - 0.71653).abs() < 1e-5);
        assert_eq!(bump(1.0, &[2.0]), 0.0);
        assert!(bump(1.0, &[2.0 - 1e-6]) < 1e-100);
        assert!((bump(1.0, &[1.0 + 1e-9]) - 1.0).abs() < 1e-12);
        assert!(BumpFunction::new(0.0).is_err());
    }

    #[test]
    fn log_derivatives_match_finite_differences() {
        let b = BumpFunction { v: 0.8 };
        for &z in &[1.0, 1.2, -1.3, 1.5] {
            for q in 1..=3 {
                let h = 1e-4;
                let fd = (b.log_derivative(z + h, q - 1) - b.log_derivative(z - h, q - 1)) / (2.0 * h);
                let an = b.log_derivative(z, q);
                assert!((fd - an).abs() < 1e-5 * an.abs().max(1.0), "z={z} q={q}: {fd} vs {an}");
            }
        }
        assert_eq!(b.log_derivative(0.3, 2), 0.0);
        assert_eq!(b.log_derivative(3.0, 1), 0.0);
    }

    #[test]
    fn bump_integral_values() {
        assert!((bump_integral(0.5, 1) - 1.603_450_16).abs() < 1e-7);
        // plateau plus shell in 2 and 3 dimensions against a crude Riemann sum
        for dim in [2, 3] {
            let v = 0.5;
            let steps = 20_000;
            let h = v / steps as f64;
            let shell: f64 = (0..steps)
                .map(|k| {
                    let r = v + (k as f64 + 0.5) * h;
                    BumpFunction { v }.radial(r) * r.powi(dim as i32 - 1) * h
                })
                .sum();
            let expect = unit_sphere_area(dim) * (v.powi(dim as i32) / dim as f64 + shell);
            assert!((bump_integral(v, dim) - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn lower_bounds() {
        let g = fit_lower_bound(&GaussianNoise { dim: 1 }, &[0.0], 1.0).unwrap();
        assert!((g - 0.241_971).abs() < 1e-6);
        let u = fit_lower_bound(&UniformNoise { half_width: 1.0 }, &[0.0], 0.5).unwrap();
        assert!((u - 0.5).abs() < 1e-8);
        assert!(matches!(fit_lower_bound(&RademacherNoise, &[0.0], 1.0), Err(Error::NotLowerBounded { .. })));
        assert!(matches!(
            fit_lower_bound(&UniformNoise { half_width: 1.0 }, &[0.0], 1.5),
            Err(Error::NotLowerBounded { .. })
        ));
    }

    #[test]
    fn gaussian_split_mass() {
        let s = build_split(Arc::new(GaussianNoise { dim: 1 }), &[0.0], 1.0, 0.25).unwrap();
        assert!((s.m_star - 0.387_988).abs() < 1e-6);
    }

    #[test]
    fn u_is_centered_at_shifted_center() {
        let s = build_split(Arc::new(GaussianNoise { dim: 1 }), &[0.3], 1.0, 0.25).unwrap();
        let n = 100_000;
        let mut out = [0.0];
        let mut sum = 0.0;
        let mut sq = 0.0;
        for k in 0..n {
            s.sample_u(&mut CounterRng::from_words(&[k, 1]), &mut out).unwrap();
            sum += out[0];
            sq += out[0] * out[0];
        }
        let mean = sum / n as f64;
        let sd = (sq / n as f64 - mean * mean).sqrt();
        assert!((mean - 0.5 * 0.3).abs() < 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn ks_basics() {
        let a: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(ks_statistic(&a, &a), 0.0);
        let b: Vec<f64> = (1000..1100).map(f64::from).collect();
        assert_eq!(ks_statistic(&a, &b), 1.0);
        assert!((ks_critical_1pct(100_000, 100_000) - 0.00728).abs() < 1e-5);
    }
}
