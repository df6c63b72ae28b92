//! Exact evaluation of operator words on finite-dimensional backends.
//!
//! An operator acting on functions of a finite state space is a square matrix
//! `M` with `(M f)(x) = sum_y M[x, y] f(y)`. Composition of `Q[a, b]` then
//! `Q[b, c]` is the matrix product `M_ab * M_bc`, so a word evaluates to the
//! product of its atom matrices taken left to right (earliest interval first).

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::DMatrix;

use super::{expansion_at, AtomKind, ExpansionTerm, Factor, OperatorAtom};
use crate::error::{Error, Result};
use crate::order::OrderParams;

/// A time-homogeneous family of linear operators on a finite-dimensional space.
pub trait OperatorFamily: Sync {
    fn dim(&self) -> usize;

    /// One base step of length `step`.
    fn base_step(&self, step: f64) -> Result<DMatrix<f64>>;

    /// The exact semigroup over `duration`.
    fn exact(&self, duration: f64) -> Result<DMatrix<f64>>;
}

/// A continuous-time Markov chain on `0..d` with Euler base steps `I + step * A`.
#[derive(Debug, Clone)]
pub struct MatrixSemigroup {
    generator: DMatrix<f64>,
}

impl MatrixSemigroup {
    /// Validates zero row sums (to 1e-12 of the row scale) and nonnegative off-diagonals.
    pub fn new(generator: DMatrix<f64>) -> Result<Self> {
        if !generator.is_square() || generator.nrows() == 0 {
            return Err(Error::invalid(format!(
                "generator must be square and nonempty, got {}x{}",
                generator.nrows(),
                generator.ncols()
            )));
        }
        for (r, row) in generator.row_iter().enumerate() {
            let scale = row.iter().map(|v| v.abs()).fold(1.0, f64::max);
            if row.sum().abs() > 1e-12 * scale {
                return Err(Error::invalid(format!("generator row {r} sums to {}", row.sum())));
            }
            for (c, &v) in row.iter().enumerate() {
                if c != r && v < 0.0 {
                    return Err(Error::invalid(format!("negative rate A[{r},{c}] = {v}")));
                }
            }
        }
        Ok(MatrixSemigroup { generator })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("generator rows must all have length equal to the row count"));
        }
        MatrixSemigroup::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    /// Largest step for which `I + step * A` stays stochastic.
    pub fn max_euler_step(&self) -> f64 {
        let rate = self.generator.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max);
        if rate == 0.0 {
            f64::INFINITY
        } else {
            1.0 / rate
        }
    }
}

impl OperatorFamily for MatrixSemigroup {
    fn dim(&self) -> usize {
        self.generator.nrows()
    }

    fn base_step(&self, step: f64) -> Result<DMatrix<f64>> {
        if step > self.max_euler_step() * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "Euler step {step} exceeds 1 / max|A_ii| = {}; I + step A is not stochastic",
                self.max_euler_step()
            )));
        }
        let d = self.dim();
        Ok(DMatrix::identity(d, d) + &self.generator * step)
    }

    fn exact(&self, duration: f64) -> Result<DMatrix<f64>> {
        if duration < 0.0 {
            return Err(Error::invalid(format!("negative duration {duration}")));
        }
        Ok(expm(&(&self.generator * duration)))
    }
}

/// Truncation degree of the Taylor series used after scaling.
pub const EXPM_TAYLOR_DEGREE: usize = 18;

/// Matrix exponential by scaling and squaring.
///
/// The argument is scaled by `2^-s` until its 1-norm is at most 1/2, the
/// exponential of the scaled matrix is summed to degree
/// [`EXPM_TAYLOR_DEGREE`] (remainder below `0.5^19 / 19! ~ 2e-23`), and the
/// result is squared `s` times.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    let norm = (0..d)
        .map(|c| a.column(c).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0i32;
    if norm > 0.5 {
        s = (norm / 0.5).log2().ceil() as i32;
    }
    let scaled = a * 2f64.powi(-s);
    let mut term = DMatrix::<f64>::identity(d, d);
    let mut sum = term.clone();
    for k in 1..=EXPM_TAYLOR_DEGREE {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `sup_{|f| <= 1} |(P - Q) f|_inf` on a finite state space: the largest row
/// L1 distance.
pub fn tv_distance_matrix(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::DimensionMismatch { expected: p.nrows(), found: q.nrows() });
    }
    Ok((p - q).row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max))
}

/// Evaluates words against a backend, caching base powers, exact blocks and
/// boosted one-step operators. Homogeneity of the backend makes every
/// interval of equal length on the same level identical, so caches are keyed
/// by length rather than position.
pub struct MatrixEvaluator<'a, F: OperatorFamily + ?Sized> {
    family: &'a F,
    params: OrderParams,
    base: Mutex<HashMap<(u32, u64), DMatrix<f64>>>,
    exact: Mutex<HashMap<(u32, u64), DMatrix<f64>>>,
    boosted: Mutex<HashMap<(u32, u32), DMatrix<f64>>>,
}

impl<'a, F: OperatorFamily + ?Sized> MatrixEvaluator<'a, F> {
    pub fn new(family: &'a F, params: OrderParams) -> Self {
        MatrixEvaluator {
            family,
            params,
            base: Mutex::new(HashMap::new()),
            exact: Mutex::new(HashMap::new()),
            boosted: Mutex::new(HashMap::new()),
        }
    }

    fn identity(&self) -> DMatrix<f64> {
        DMatrix::identity(self.family.dim(), self.family.dim())
    }

    fn cached(
        &self,
        cache: &Mutex<HashMap<(u32, u64), DMatrix<f64>>>,
        key: (u32, u64),
        make: impl FnOnce() -> Result<DMatrix<f64>>,
    ) -> Result<DMatrix<f64>> {
        if let Some(m) = cache.lock().expect("cache poisoned").get(&key) {
            return Ok(m.clone());
        }
        let m = make()?;
        cache.lock().expect("cache poisoned").entry(key).or_insert_with(|| m.clone());
        Ok(m)
    }

    /// `(Q^{T/n^level})^len`.
    pub fn base_power(&self, level: u32, len: u64) -> Result<DMatrix<f64>> {
        if len == 0 {
            return Ok(self.identity());
        }
        self.cached(&self.base, (level, len), || {
            let step = self.family.base_step(self.params.grid.step_at(level))?;
            check_dim(&step, self.family.dim())?;
            // binary powering
            let mut result = self.identity();
            let mut base = step;
            let mut e = len;
            while e > 0 {
                if e & 1 == 1 {
                    result = &result * &base;
                }
                e >>= 1;
                if e > 0 {
                    base = &base * &base;
                }
            }
            Ok(result)
        })
    }

    pub fn exact_block(&self, level: u32, len: u64) -> Result<DMatrix<f64>> {
        if len == 0 {
            return Ok(self.identity());
        }
        self.cached(&self.exact, (level, len), || {
            let m = self.family.exact(len as f64 * self.params.grid.step_at(level))?;
            check_dim(&m, self.family.dim())?;
            Ok(m)
        })
    }

    /// `Qhat^{order, T/n^level}` over one level step, from its words.
    pub fn boosted(&self, order: u32, level: u32) -> Result<DMatrix<f64>> {
        if let Some(m) = self.boosted.lock().expect("cache poisoned").get(&(order, level)) {
            return Ok(m.clone());
        }
        let terms = expansion_at(&self.params, level, order, 0, 0);
        let m = self.sum(&terms)?;
        self.boosted.lock().expect("cache poisoned").entry((order, level)).or_insert_with(|| m.clone());
        Ok(m)
    }

    pub fn atom(&self, atom: &OperatorAtom) -> Result<DMatrix<f64>> {
        if atom.end < atom.start {
            return Err(Error::Invariant(format!("reversed atom {atom}")));
        }
        match atom.kind {
            AtomKind::Base => self.base_power(atom.level, atom.len()),
            AtomKind::Exact => self.exact_block(atom.level, atom.len()),
            AtomKind::Boosted { order } => {
                if atom.len() != 1 {
                    return Err(Error::Invariant(format!("boosted atom must span one step: {atom}")));
                }
                self.boosted(order, atom.level)
            }
        }
    }

    fn factor(&self, factor: &Factor) -> Result<DMatrix<f64>> {
        match factor {
            Factor::Single(a) => self.atom(a),
            Factor::Difference { plus, minus } => Ok(self.atom(plus)? - self.atom(minus)?),
        }
    }

    pub fn term(&self, term: &ExpansionTerm) -> Result<DMatrix<f64>> {
        let mut acc = self.identity();
        for f in &term.factors {
            acc = &acc * self.factor(f)?;
        }
        if term.sign < 0 {
            acc.neg_mut();
        }
        Ok(acc)
    }

    /// `sum_k sign_k * word_k`.
    pub fn sum(&self, terms: &[ExpansionTerm]) -> Result<DMatrix<f64>> {
        let d = self.family.dim();
        let mut total = DMatrix::zeros(d, d);
        for t in terms {
            total += self.term(t)?;
        }
        Ok(total)
    }
}

fn check_dim(m: &DMatrix<f64>, d: usize) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: m.nrows() });
    }
    Ok(())
}

/// `sum sign * prod atoms` for `terms` against `family`.
pub fn evaluate_matrix<F: OperatorFamily + ?Sized>(
    terms: &[ExpansionTerm],
    family: &F,
    params: &OrderParams,
) -> Result<DMatrix<f64>> {
    MatrixEvaluator::new(family, *params).sum(terms)
}

/// `exp(t A)` for a matrix backend.
pub fn exact_semigroup_matrix(backend: &MatrixSemigroup, t: f64) -> Result<DMatrix<f64>> {
    backend.exact(t)
}

/// `Qhat^{nu, T/n^level}` over one level step, without enumerating words.
///
/// The sum over increasing `i`-tuples of words over `{B, D}` with exactly `i`
/// letters `D` (here `B` the fine base step and `D = Qhat^{q_i} - B`) is the
/// degree-`i` coefficient of `(B + z D)^n`, computed by a running table over
/// word length.
pub fn qhat_matrix<F: OperatorFamily + ?Sized>(family: &F, params: &OrderParams, nu: u32, level: u32) -> Result<DMatrix<f64>> {
    let mut memo = HashMap::new();
    qhat_rec(family, params, nu, level, &mut memo)
}

fn qhat_rec<F: OperatorFamily + ?Sized>(
    family: &F,
    params: &OrderParams,
    nu: u32,
    level: u32,
    memo: &mut HashMap<(u32, u32), DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    if let Some(m) = memo.get(&(nu, level)) {
        return Ok(m.clone());
    }
    let n = params.n() as usize;
    let fine = level + 1;
    let b = family.base_step(params.grid.step_at(fine))?;
    check_dim(&b, family.dim())?;
    let mut total = b.pow(n as u32);
    let m = params.m(level, nu);
    for i in 1..m as usize {
        let q = params.q(i as u32, level, nu)?;
        let diff = qhat_rec(family, params, q, fine, memo)? - &b;
        // table[j] = sum of words of the current length with j letters D
        let d = family.dim();
        let mut table = vec![DMatrix::<f64>::zeros(d, d); i + 1];
        table[0] = DMatrix::identity(d, d);
        for len in 1..=n {
            for j in (0..=i.min(len)).rev() {
                let mut next = &table[j] * &b;
                if j > 0 {
                    next += &table[j - 1] * &diff;
                }
                table[j] = next;
            }
        }
        total += &table[i];
    }
    memo.insert((nu, level), total.clone());
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::build_expansion;

    fn two_state() -> MatrixSemigroup {
        MatrixSemigroup::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap()
    }

    #[test]
    fn order_zero_on_two_states_is_two_euler_steps() {
        let p = OrderParams::euler(0, 1.0, 2).unwrap();
        let terms = build_expansion(&p, 0, 0.0, 1.0).unwrap();
        let m = evaluate_matrix(&terms, &two_state(), &p).unwrap();
        assert!((m[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exponential_of_two_state_generator() {
        let e = exact_semigroup_matrix(&two_state(), 1.0).unwrap();
        let diag = (1.0 + (-2f64).exp()) / 2.0;
        assert!((e[(0, 0)] - diag).abs() < 1e-14);
        assert!((e[(0, 1)] - (1.0 - diag)).abs() < 1e-14);
        assert!((e[(0, 0)] - 0.5676676).abs() < 1e-6);
        let id = exact_semigroup_matrix(&two_state(), 0.0).unwrap();
        assert_eq!(id, DMatrix::identity(2, 2));
    }

    #[test]
    fn tv_examples() {
        let i = DMatrix::<f64>::identity(2, 2);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(tv_distance_matrix(&i, &i).unwrap(), 0.0);
        assert_eq!(tv_distance_matrix(&i, &swap).unwrap(), 2.0);
        let e = exact_semigroup_matrix(&two_state(), 1.0).unwrap();
        let p = OrderParams::euler(0, 1.0, 2).unwrap();
        let q = evaluate_matrix(&build_expansion(&p, 0, 0.0, 1.0).unwrap(), &two_state(), &p).unwrap();
        // each row has two entries off by 0.0676676
        let expected = 2.0 * ((1.0 + (-2f64).exp()) / 2.0 - 0.5);
        assert!((tv_distance_matrix(&e, &q).unwrap() - expected).abs() < 1e-12);
        assert!((tv_distance_matrix(&e, &q).unwrap() - 0.1353353).abs() < 1e-6);
    }

    #[test]
    fn zero_generator_gives_identity() {
        let zero = MatrixSemigroup::new(DMatrix::zeros(3, 3)).unwrap();
        for nu in 0..=3 {
            let p = OrderParams::euler(nu, 1.0, 3).unwrap();
            let m = evaluate_matrix(&build_expansion(&p, 0, 0.0, 1.0).unwrap(), &zero, &p).unwrap();
            assert!((m - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_generators() {
        assert!(MatrixSemigroup::from_rows(&[vec![-1.0, 0.5], vec![1.0, -1.0]]).is_err());
        assert!(MatrixSemigroup::from_rows(&[vec![1.0, -1.0], vec![1.0, -1.0]]).is_err());
        assert!(two_state().base_step(1.5).is_err());
    }

    #[test]
    fn boosted_atom_must_span_one_step() {
        let p = OrderParams::euler(2, 1.0, 2).unwrap();
        let fam = two_state();
        let ev = MatrixEvaluator::new(&fam, p);
        let bad = OperatorAtom { kind: AtomKind::Boosted { order: 3 }, level: 1, start: 0, end: 2 };
        assert!(ev.atom(&bad).is_err());
    }
}
