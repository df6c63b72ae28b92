//! One-step Markov recursions `X_{t+d} = psi(kappa, X_t, sqrt(d) Z, d)` and
//! their semigroups.

pub mod chain;
pub mod oracle;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::estimate::{estimate_mean, MCEstimate};
use crate::order::GridSpec;
use crate::rng::{stream_key, CounterRng};

pub use oracle::{ou_oracle, OuFunctional};

/// Small inline buffer for states and noise.
pub type Buf = SmallVec<[f64; 8]>;

/// Base step of central finite differences for first derivatives. A total
/// derivative order `k` uses `FD_STEP * 10^(k-1)`.
pub const FD_STEP: f64 = 1e-5;

fn fd_step(order: u32) -> f64 {
    FD_STEP * 10f64.powi(order.saturating_sub(1) as i32)
}

/// A mixed partial derivative `d_x^a d_z^b d_t^c`, orders per coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partial {
    pub x: Vec<u32>,
    pub z: Vec<u32>,
    pub t: u32,
}

impl Partial {
    pub fn zero(d: usize, n: usize) -> Self {
        Partial { x: vec![0; d], z: vec![0; n], t: 0 }
    }

    pub fn x_order(&self) -> u32 {
        self.x.iter().sum()
    }

    pub fn z_order(&self) -> u32 {
        self.z.iter().sum()
    }

    pub fn order(&self) -> u32 {
        self.x_order() + self.z_order() + self.t
    }
}

/// Nested central differences of `g: R^k -> R^m` at `point`.
pub fn fd_partial(
    g: &dyn Fn(&[f64], &mut [f64]),
    point: &[f64],
    orders: &[u32],
    h: f64,
    out: &mut [f64],
) {
    let Some(j) = orders.iter().position(|&o| o > 0) else {
        g(point, out);
        return;
    };
    let mut lower = orders.to_vec();
    lower[j] -= 1;
    let mut p = point.to_vec();
    let mut plus = vec![0.0; out.len()];
    let mut minus = vec![0.0; out.len()];
    p[j] = point[j] + h;
    fd_partial(g, &p, &lower, h, &mut plus);
    p[j] = point[j] - h;
    fd_partial(g, &p, &lower, h, &mut minus);
    for ((o, a), b) in out.iter_mut().zip(&plus).zip(&minus) {
        *o = (a - b) / (2.0 * h);
    }
}

/// A smooth map `psi(kappa, x, z, d)` with `psi(kappa, x, 0, 0) = x`.
pub trait SchemeFunction: Send + Sync {
    fn dim_x(&self) -> usize;
    fn dim_z(&self) -> usize;

    fn psi(&self, kappa: f64, x: &[f64], z: &[f64], delta: f64, out: &mut [f64]);

    /// `partial` of psi at the point. The default uses central finite
    /// differences in all variables.
    fn derivative(&self, kappa: f64, x: &[f64], z: &[f64], delta: f64, partial: &Partial, out: &mut [f64]) {
        let (d, n) = (self.dim_x(), self.dim_z());
        let mut point = Vec::with_capacity(d + n + 1);
        point.extend_from_slice(x);
        point.extend_from_slice(z);
        point.push(delta);
        let mut orders = Vec::with_capacity(d + n + 1);
        orders.extend_from_slice(&partial.x);
        orders.extend_from_slice(&partial.z);
        orders.push(partial.t);
        let g = |p: &[f64], o: &mut [f64]| self.psi(kappa, &p[..d], &p[d..d + n], p[d + n], o);
        fd_partial(&g, &point, &orders, fd_step(partial.order()), out);
    }

    /// True when [`SchemeFunction::derivative`] is exact rather than finite differences.
    fn analytic_derivatives(&self) -> bool {
        false
    }
}

type Field = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Euler–Maruyama: `psi(kappa, x, z, d) = x + d b(x) + sigma(x) z`.
pub struct EulerScheme {
    d: usize,
    n: usize,
    drift: Field,
    /// Row-major `d x n`.
    diffusion: Field,
    /// Set when `b` and `sigma` are affine and constant respectively, so that
    /// every `x`-derivative of them is exact.
    affine: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl fmt::Debug for EulerScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EulerScheme").field("d", &self.d).field("n", &self.n).finish()
    }
}

/// Euler scheme for drift `b: R^d -> R^d` and diffusion `sigma: R^d -> R^{d x n}`
/// (row-major). The dimensions are checked by evaluating both fields at the origin.
pub fn make_euler(
    d: usize,
    n: usize,
    drift: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    diffusion: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
) -> Result<EulerScheme> {
    if d == 0 || n == 0 {
        return Err(Error::invalid("state and noise dimensions must be positive"));
    }
    let origin = vec![0.0; d];
    let mut b = vec![f64::NAN; d];
    drift(&origin, &mut b);
    let mut s = vec![f64::NAN; d * n];
    diffusion(&origin, &mut s);
    if b.iter().chain(&s).any(|v| v.is_nan()) {
        return Err(Error::DimensionMismatch { expected: d * n, found: s.iter().filter(|v| !v.is_nan()).count() });
    }
    Ok(EulerScheme { d, n, drift: Box::new(drift), diffusion: Box::new(diffusion), affine: None })
}

/// Euler scheme of `dX = B X dt + S dW` with constant matrices.
pub fn make_linear_euler(b: DMatrix<f64>, s: DMatrix<f64>) -> Result<EulerScheme> {
    if !b.is_square() || s.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch { expected: b.nrows(), found: s.nrows() });
    }
    let (d, n) = (s.nrows(), s.ncols());
    let (bb, ss) = (b.clone(), s.clone());
    let mut scheme = make_euler(
        d,
        n,
        move |x, out| {
            for i in 0..d {
                out[i] = (0..d).map(|j| bb[(i, j)] * x[j]).sum();
            }
        },
        move |_, out| {
            for i in 0..d {
                for j in 0..n {
                    out[i * n + j] = ss[(i, j)];
                }
            }
        },
    )?;
    scheme.affine = Some((b, s));
    Ok(scheme)
}

/// Ornstein–Uhlenbeck `dX = -a X dt + sigma dW`, one dimension.
pub fn make_ou(a: f64, sigma: f64) -> EulerScheme {
    make_linear_euler(DMatrix::from_element(1, 1, -a), DMatrix::from_element(1, 1, sigma)).expect("1x1")
}

/// `psi = x + z`.
pub fn make_brownian(d: usize) -> EulerScheme {
    make_linear_euler(DMatrix::zeros(d, d), DMatrix::identity(d, d)).expect("square")
}

impl EulerScheme {
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }
}

impl SchemeFunction for EulerScheme {
    fn dim_x(&self) -> usize {
        self.d
    }

    fn dim_z(&self) -> usize {
        self.n
    }

    #[inline]
    fn psi(&self, _kappa: f64, x: &[f64], z: &[f64], delta: f64, out: &mut [f64]) {
        let (d, n) = (self.d, self.n);
        if d == 1 && n == 1 {
            let mut b = [0.0];
            let mut s = [0.0];
            (self.drift)(x, &mut b);
            (self.diffusion)(x, &mut s);
            out[0] = x[0] + delta * b[0] + s[0] * z[0];
            return;
        }
        let mut b: Buf = SmallVec::from_elem(0.0, d);
        let mut s: SmallVec<[f64; 16]> = SmallVec::from_elem(0.0, d * n);
        (self.drift)(x, &mut b);
        (self.diffusion)(x, &mut s);
        for i in 0..d {
            out[i] = x[i] + delta * b[i] + (0..n).map(|j| s[i * n + j] * z[j]).sum::<f64>();
        }
    }

    fn derivative(&self, kappa: f64, x: &[f64], z: &[f64], delta: f64, partial: &Partial, out: &mut [f64]) {
        let (d, n) = (self.d, self.n);
        let (zo, to, xo) = (partial.z_order(), partial.t, partial.x_order());
        // psi is affine in (delta, z) with no delta*z term
        if zo >= 2 || to >= 2 || (zo >= 1 && to >= 1) {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        if zo == 0 && to == 0 {
            match &self.affine {
                Some((b, _)) if xo == 1 => {
                    let j = partial.x.iter().position(|&o| o == 1).expect("order one");
                    for i in 0..d {
                        out[i] = f64::from(u8::from(i == j)) + delta * b[(i, j)];
                    }
                }
                Some(_) if xo >= 2 => out.iter_mut().for_each(|v| *v = 0.0),
                _ => {
                    let g = |p: &[f64], o: &mut [f64]| self.psi(kappa, p, z, delta, o);
                    fd_partial(&g, x, &partial.x, fd_step(xo), out);
                }
            }
            return;
        }
        if to == 1 {
            match &self.affine {
                Some((b, _)) => match xo {
                    0 => (self.drift)(x, out),
                    1 => {
                        let j = partial.x.iter().position(|&o| o == 1).expect("order one");
                        (0..d).for_each(|i| out[i] = b[(i, j)]);
                    }
                    _ => out.iter_mut().for_each(|v| *v = 0.0),
                },
                None => fd_partial(&|p, o| (self.drift)(p, o), x, &partial.x, fd_step(xo.max(1)), out),
            }
            return;
        }
        // one z derivative: column k of sigma
        let k = partial.z.iter().position(|&o| o == 1).expect("order one");
        let column = |p: &[f64], o: &mut [f64]| {
            let mut s: SmallVec<[f64; 16]> = SmallVec::from_elem(0.0, d * n);
            (self.diffusion)(p, &mut s);
            (0..d).for_each(|i| o[i] = s[i * n + k]);
        };
        match (&self.affine, xo) {
            (_, 0) => column(x, out),
            (Some(_), _) => out.iter_mut().for_each(|v| *v = 0.0),
            (None, _) => fd_partial(&column, x, &partial.x, fd_step(xo), out),
        }
    }

    fn analytic_derivatives(&self) -> bool {
        self.affine.is_some()
    }
}

/// Law of the noise `Z`.
pub trait NoiseLaw: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut CounterRng, out: &mut [f64]);
    /// Lebesgue density, when the law has one.
    fn density(&self, z: &[f64]) -> Option<f64>;
    fn name(&self) -> String;
}

/// Standard Gaussian on `R^dim`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianNoise {
    pub dim: usize,
}

impl NoiseLaw for GaussianNoise {
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn sample(&self, rng: &mut CounterRng, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }

    fn density(&self, z: &[f64]) -> Option<f64> {
        let r2: f64 = z.iter().map(|v| v * v).sum();
        Some((-0.5 * r2).exp() / (2.0 * std::f64::consts::PI).powf(self.dim as f64 / 2.0))
    }

    fn name(&self) -> String {
        format!("gaussian({})", self.dim)
    }
}

/// Uniform on `[-half_width, half_width]`.
#[derive(Debug, Clone, Copy)]
pub struct UniformNoise {
    pub half_width: f64,
}

impl NoiseLaw for UniformNoise {
    fn dim(&self) -> usize {
        1
    }

    fn sample(&self, rng: &mut CounterRng, out: &mut [f64]) {
        out[0] = self.half_width * (2.0 * rng.random::<f64>() - 1.0);
    }

    fn density(&self, z: &[f64]) -> Option<f64> {
        Some(if z[0].abs() <= self.half_width { 0.5 / self.half_width } else { 0.0 })
    }

    fn name(&self) -> String {
        format!("uniform({})", self.half_width)
    }
}

/// `+1` or `-1` with probability one half; no density.
#[derive(Debug, Clone, Copy)]
pub struct RademacherNoise;

impl NoiseLaw for RademacherNoise {
    fn dim(&self) -> usize {
        1
    }

    fn sample(&self, rng: &mut CounterRng, out: &mut [f64]) {
        out[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }

    fn density(&self, _: &[f64]) -> Option<f64> {
        None
    }

    fn name(&self) -> String {
        "rademacher".into()
    }
}

/// Law of the auxiliary variable `kappa_t`. Only degenerate laws ship.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaLaw {
    Constant(f64),
}

impl KappaLaw {
    #[inline]
    pub fn draw(&self) -> f64 {
        match *self {
            KappaLaw::Constant(k) => k,
        }
    }
}

/// Identifies one simulated path: noise at `(level, index)` on this path is
/// keyed by `(seed, sample, path, level, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PathKey {
    pub seed: u64,
    pub sample: u64,
    pub path: u64,
}

impl PathKey {
    pub fn new(seed: u64, sample: u64) -> Self {
        PathKey { seed, sample, path: 0 }
    }

    /// A child path, independent of the parent after the branch point.
    pub fn child(&self, tag: u64) -> Self {
        PathKey { path: crate::rng::mix(self.path ^ 0x5bd1_e995, tag), ..*self }
    }

    /// Stream for the noise `Z_{(index) * T/n^level}` at grid `level`.
    #[inline]
    pub fn rng(&self, level: u32, index: u64) -> CounterRng {
        CounterRng::new(stream_key(&[self.seed, self.sample, self.path, level as u64, index]))
    }
}

/// A scheme, a noise law and a grid: the discrete semigroup `Q^d`.
#[derive(Clone)]
pub struct SchemeSemigroup {
    pub scheme: Arc<dyn SchemeFunction>,
    pub noise: Arc<dyn NoiseLaw>,
    pub kappa: KappaLaw,
    pub grid: GridSpec,
}

impl fmt::Debug for SchemeSemigroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SchemeSemigroup")
            .field("dim_x", &self.scheme.dim_x())
            .field("noise", &self.noise.name())
            .field("grid", &self.grid)
            .finish()
    }
}

impl SchemeSemigroup {
    pub fn new(scheme: Arc<dyn SchemeFunction>, noise: Arc<dyn NoiseLaw>, grid: GridSpec) -> Result<Self> {
        if scheme.dim_z() != noise.dim() {
            return Err(Error::DimensionMismatch { expected: scheme.dim_z(), found: noise.dim() });
        }
        Ok(SchemeSemigroup { scheme, noise, kappa: KappaLaw::Constant(0.0), grid })
    }

    pub fn with_grid(&self, grid: GridSpec) -> Self {
        SchemeSemigroup { grid, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.scheme.dim_x()
    }

    /// `psi(kappa, x, sqrt(d) z, d)`.
    #[inline]
    pub fn step(&self, x: &[f64], z: &[f64], delta: f64, out: &mut [f64]) -> Result<()> {
        let mut w: Buf = SmallVec::from_slice(z);
        let sd = delta.sqrt();
        w.iter_mut().for_each(|v| *v *= sd);
        self.scheme.psi(self.kappa.draw(), x, &w, delta, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { state: out.to_vec(), input: x.to_vec(), noise: z.to_vec(), delta });
        }
        Ok(())
    }

    /// Advance `x` in place by `steps` steps of the level-`level` grid,
    /// starting at grid index `from`. Returns the number of steps taken.
    pub fn advance(&self, x: &mut [f64], level: u32, from: u64, steps: u64, key: &PathKey) -> Result<u64> {
        let delta = self.grid.step_at(level);
        let mut z: Buf = SmallVec::from_elem(0.0, self.noise.dim());
        let mut next: Buf = SmallVec::from_elem(0.0, x.len());
        for k in from..from + steps {
            let mut rng = key.rng(level, k + 1);
            self.noise.sample(&mut rng, &mut z);
            self.step(x, &z, delta, &mut next)?;
            x.copy_from_slice(&next);
        }
        Ok(steps)
    }
}

/// One scheme step: `psi(kappa, x, sqrt(d) z, d)`.
pub fn step(sg: &SchemeSemigroup, x: &[f64], z: &[f64], delta: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    sg.step(x, z, delta, &mut out)?;
    Ok(out)
}

/// `E[f(X_t) | X_0 = x0]` under the scheme on `sg.grid` at its level.
pub fn weak_expectation<F>(sg: &SchemeSemigroup, x0: &[f64], t: f64, f: F, n_samples: u64, seed: u64) -> Result<MCEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if x0.len() != sg.dim() {
        return Err(Error::DimensionMismatch { expected: sg.dim(), found: x0.len() });
    }
    let level = sg.grid.level();
    let steps = sg
        .grid
        .index_of(level, t)
        .ok_or(Error::Misaligned { level, start: 0.0, end: t })?;
    estimate_mean(n_samples, |k| {
        let mut x: Buf = SmallVec::from_slice(x0);
        let work = sg.advance(&mut x, level, 0, steps, &PathKey::new(seed, k))?;
        Ok((f(&x), work))
    })
}

/// A point `(kappa, x, z, d)` at which norms are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudPoint {
    pub kappa: f64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub delta: f64,
}

/// Points `(0, x, 0, 0)` for each state.
pub fn state_cloud(states: &[Vec<f64>], dim_z: usize) -> Vec<CloudPoint> {
    states.iter().map(|x| CloudPoint { kappa: 0.0, x: x.clone(), z: vec![0.0; dim_z], delta: 0.0 }).collect()
}

/// Lower estimates of the scheme norms over a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiNorm {
    pub r: u32,
    /// `1 v sum of sup norms` at order `r`.
    pub norm: f64,
    /// The same at order 3.
    pub norm3: f64,
    /// `(1 + norm) exp(norm3^2)`.
    pub gronwall: f64,
    pub cloud_size: usize,
    pub analytic: bool,
}

/// Multi-indices of length `len` with total order exactly `k`.
fn multi_indices(len: usize, k: u32) -> Vec<Vec<u32>> {
    if len == 0 {
        return if k == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 0..=k {
        for mut rest in multi_indices(len - 1, k - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn norm_at_order(scheme: &dyn SchemeFunction, r: u32, cloud: &[CloudPoint]) -> f64 {
    let (d, n) = (scheme.dim_x(), scheme.dim_z());
    let mut total = 0.0;
    let mut out = vec![0.0; d];
    for ax in 0..=r {
        for alpha in multi_indices(d, ax) {
            for bz in 1..=(r - ax) {
                // |beta| + |gamma| = bz
                for zt in multi_indices(n + 1, bz) {
                    let partial = Partial { x: alpha.clone(), z: zt[..n].to_vec(), t: zt[n] };
                    let sup = cloud
                        .iter()
                        .map(|p| {
                            scheme.derivative(p.kappa, &p.x, &p.z, p.delta, &partial, &mut out);
                            out.iter().map(|v| v * v).sum::<f64>().sqrt()
                        })
                        .fold(0.0, f64::max);
                    total += sup;
                }
            }
        }
    }
    total.max(1.0)
}

/// `|psi|_{1,r}` as a max over `cloud` of each derivative, and the Gronwall
/// constant `(1 + |psi|_{1,r}) exp(|psi|_{1,3}^2)`.
pub fn psi_norm_estimate(scheme: &dyn SchemeFunction, r: u32, cloud: &[CloudPoint]) -> Result<PsiNorm> {
    if cloud.is_empty() {
        return Err(Error::invalid("norm cloud is empty"));
    }
    if r == 0 {
        return Err(Error::invalid("norm order must be at least 1"));
    }
    for p in cloud {
        if p.x.len() != scheme.dim_x() || p.z.len() != scheme.dim_z() {
            return Err(Error::DimensionMismatch { expected: scheme.dim_x(), found: p.x.len() });
        }
    }
    let norm = norm_at_order(scheme, r, cloud);
    let norm3 = if r == 3 { norm } else { norm_at_order(scheme, 3, cloud) };
    Ok(PsiNorm {
        r,
        norm,
        norm3,
        gronwall: (1.0 + norm) * (norm3 * norm3).exp(),
        cloud_size: cloud.len(),
        analytic: scheme.analytic_derivatives(),
    })
}

/// `min` over the cloud of the smallest eigenvalue of `J J^T`, `J = d_z psi(kappa, x, 0, 0)`.
pub fn ellipticity_floor(scheme: &dyn SchemeFunction, cloud: &[CloudPoint]) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::invalid("ellipticity cloud is empty"));
    }
    let (d, n) = (scheme.dim_x(), scheme.dim_z());
    let mut floor = f64::INFINITY;
    let mut col = vec![0.0; d];
    for p in cloud {
        let mut j = DMatrix::zeros(d, n);
        for k in 0..n {
            let mut partial = Partial::zero(d, n);
            partial.z[k] = 1;
            scheme.derivative(p.kappa, &p.x, &vec![0.0; n], 0.0, &partial, &mut col);
            for i in 0..d {
                j[(i, k)] = col[i];
            }
        }
        let gram = &j * j.transpose();
        let min = SymmetricEigen::new(gram).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        floor = floor.min(min.max(0.0));
    }
    Ok(floor)
}

/// `1 v E|Z|^p`, with the standard error of the raw estimate.
pub fn moment_estimate(noise: &dyn NoiseLaw, p: f64, n_samples: u64, seed: u64) -> Result<MCEstimate> {
    if p < 1.0 {
        return Err(Error::invalid(format!("moment order {p} below 1")));
    }
    let dim = noise.dim();
    let mut est = estimate_mean(n_samples, |k| {
        let mut z: Buf = SmallVec::from_elem(0.0, dim);
        noise.sample(&mut CounterRng::from_words(&[seed, k, 0x6d6f6d]), &mut z);
        Ok((z.iter().map(|v| v * v).sum::<f64>().sqrt().powf(p), 0))
    })?;
    est.mean = est.mean.max(1.0);
    Ok(est)
}

/// Test functions of the first coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    /// `x^2`
    Square,
    Cos,
    /// `1{x <= K}`
    Indicator(f64),
    Linear,
    One,
}

impl TestFunction {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = x[0];
        match *self {
            TestFunction::Square => v * v,
            TestFunction::Cos => v.cos(),
            TestFunction::Indicator(k) => f64::from(u8::from(v <= k)),
            TestFunction::Linear => v,
            TestFunction::One => 1.0,
        }
    }

    /// `sup |f|`, infinite for unbounded functions.
    pub fn sup_norm(&self) -> f64 {
        match self {
            TestFunction::Cos | TestFunction::Indicator(_) | TestFunction::One => 1.0,
            _ => f64::INFINITY,
        }
    }

    /// `E f(X_T)` for the exact Ornstein–Uhlenbeck process.
    pub fn ou_exact(&self, a: f64, sigma: f64, x0: f64, t: f64) -> Result<f64> {
        let functional = match *self {
            TestFunction::Square => OuFunctional::SecondMoment,
            TestFunction::Cos => OuFunctional::CosMean,
            TestFunction::Indicator(k) => OuFunctional::CdfAt(k),
            TestFunction::Linear => OuFunctional::Mean,
            TestFunction::One => return Ok(1.0),
        };
        ou_oracle(a, sigma, x0, t, functional)
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Square => write!(f, "poly"),
            TestFunction::Cos => write!(f, "cos"),
            TestFunction::Indicator(k) => write!(f, "indicator:{k}"),
            TestFunction::Linear => write!(f, "linear"),
            TestFunction::One => write!(f, "one"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "poly" | "square" => Ok(TestFunction::Square),
            "cos" => Ok(TestFunction::Cos),
            "linear" => Ok(TestFunction::Linear),
            "one" => Ok(TestFunction::One),
            other => match other.strip_prefix("indicator:") {
                Some(k) => k
                    .parse()
                    .map(TestFunction::Indicator)
                    .map_err(|_| Error::Config(format!("bad indicator level in {other:?}"))),
                None => Err(Error::Config(format!("unknown test function {other:?}"))),
            },
        }
    }
}
