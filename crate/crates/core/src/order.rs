//! Nested time grids and the integer parameters of the boosting recursion.
//!
//! Everything here is exact integer arithmetic. Grid points are addressed by
//! `(level, index)` pairs; real times are only derived on demand, so grid
//! membership never depends on accumulated floating point sums.
//!
//! With base weak order `alpha`, derivative count `beta` and target order
//! `nu`, the recursion uses
//!
//! ```text
//! m(l, nu)     = ceil(nu / ((1 + alpha) l + alpha))
//! q_i(l, nu)   = nu + i - (1 + alpha)(l + 1)(i - 1),      1 <= i <= m - 1
//! kappa(l, nu) = max(beta m(l, nu), max_i i kappa(l + 1, q_i(l, nu)))
//! l(nu, alpha) = ceil(nu / alpha)
//! ```

use std::collections::HashMap;

use crate::error::{Error, Result};

/// The family of nested grids `pi^{T/n^l}` on `[0, T]`, viewed at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    horizon: f64,
    n: u32,
    level: u32,
}

impl GridSpec {
    /// Grid at level 0 (a single step of length `horizon`).
    pub fn new(horizon: f64, n: u32) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if n < 2 {
            return Err(Error::invalid(format!("refinement factor must be >= 2, got {n}")));
        }
        Ok(GridSpec { horizon, n, level: 0 })
    }

    pub fn with_level(self, level: u32) -> Self {
        GridSpec { level, ..self }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Number of steps `n^level` covering `[0, T]` at `level`.
    pub fn steps_at(&self, level: u32) -> u64 {
        (self.n as u64).pow(level)
    }

    /// Step length `T / n^level`.
    pub fn step_at(&self, level: u32) -> f64 {
        self.horizon / self.steps_at(level) as f64
    }

    /// Step length at this grid's own level.
    pub fn step(&self) -> f64 {
        self.step_at(self.level)
    }

    /// Number of steps at this grid's own level.
    pub fn steps(&self) -> u64 {
        self.steps_at(self.level)
    }

    pub fn time_at(&self, level: u32, index: u64) -> f64 {
        let steps = self.steps_at(level);
        if index == steps {
            // exact endpoint, no rounding
            return self.horizon;
        }
        index as f64 * self.horizon / steps as f64
    }

    /// The `n^level + 1` grid points of `[0, T]` at `level`.
    pub fn points(&self, level: u32) -> Vec<f64> {
        (0..=self.steps_at(level)).map(|k| self.time_at(level, k)).collect()
    }

    /// Index of `t` on the level grid, if `t` lies on it (relative tolerance 1e-9 of a step).
    pub fn index_of(&self, level: u32, t: f64) -> Option<u64> {
        let scaled = t / self.step_at(level);
        let k = scaled.round();
        if k < 0.0 || (scaled - k).abs() > 1e-9 * scaled.abs().max(1.0) {
            return None;
        }
        Some(k as u64)
    }
}

fn check_alpha(alpha: u32) -> Result<()> {
    if alpha == 0 {
        Err(Error::invalid("base order alpha must be >= 1"))
    } else {
        Ok(())
    }
}

fn ceil_div(num: u64, den: u64) -> u64 {
    num.div_ceil(den)
}

/// `m(l, nu) = ceil(nu / ((1 + alpha) l + alpha))`, the number of terms of the
/// expansion at level `l` (base word plus `m - 1` correction sums).
pub fn m_steps(level: u32, nu: u32, alpha: u32) -> Result<u32> {
    check_alpha(alpha)?;
    let den = (1 + alpha as u64) * level as u64 + alpha as u64;
    Ok(ceil_div(nu as u64, den) as u32)
}

/// The raw formula `nu + i - (1 + alpha)(l + 1)(i - 1)` with no range check.
/// Can be negative outside `1 <= i <= m - 1`.
pub fn q_formula(i: u32, level: u32, nu: u32, alpha: u32) -> i64 {
    nu as i64 + i as i64 - (1 + alpha as i64) * (level as i64 + 1) * (i as i64 - 1)
}

/// `q_i(l, nu)`: the order requested from the boosted one-step operator inside
/// the `i`-th correction sum.
pub fn q_order(i: u32, level: u32, nu: u32, alpha: u32) -> Result<u32> {
    let m = m_steps(level, nu, alpha)?;
    if i == 0 || i + 1 > m {
        return Err(Error::invalid(format!(
            "correction index i = {i} outside [1, {}] for (l, nu, alpha) = ({level}, {nu}, {alpha})",
            m as i64 - 1
        )));
    }
    let q = q_formula(i, level, nu, alpha);
    debug_assert!(q >= 1);
    Ok(q as u32)
}

/// `kappa(l, nu)`, evaluated by plain recursion.
///
/// When `m(l, nu) = 1` the inner max is over an empty set and the result is
/// `beta`; for `nu = 0` (where `m = 0`) the result is `0`.
pub fn kappa(level: u32, nu: u32, alpha: u32, beta: u32) -> Result<u32> {
    let m = m_steps(level, nu, alpha)?;
    let mut best = beta * m;
    for i in 1..m {
        let q = q_order(i, level, nu, alpha)?;
        best = best.max(i * kappa(level + 1, q, alpha, beta)?);
    }
    Ok(best)
}

/// Memoized `kappa`. Keep one table per caller.
#[derive(Debug, Clone)]
pub struct KappaTable {
    alpha: u32,
    beta: u32,
    memo: HashMap<(u32, u32), u32>,
}

impl KappaTable {
    pub fn new(alpha: u32, beta: u32) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(KappaTable { alpha, beta, memo: HashMap::new() })
    }

    pub fn get(&mut self, level: u32, nu: u32) -> Result<u32> {
        if let Some(&k) = self.memo.get(&(level, nu)) {
            return Ok(k);
        }
        let m = m_steps(level, nu, self.alpha)?;
        let mut best = self.beta * m;
        for i in 1..m {
            let q = q_order(i, level, nu, self.alpha)?;
            best = best.max(i * self.get(level + 1, q)?);
        }
        self.memo.insert((level, nu), best);
        Ok(best)
    }
}

/// `l(nu, alpha) = ceil(nu / alpha)`, the deepest grid level the construction touches.
pub fn l_max(nu: u32, alpha: u32) -> Result<u32> {
    check_alpha(alpha)?;
    Ok(ceil_div(nu as u64, alpha as u64) as u32)
}

/// `q_nu = max_{1 <= i <= m(0, nu)} i max(beta, kappa(1, q_i(0, nu)))`.
///
/// `q_i` is taken at level 0 with target `nu`. The index runs up to `m(0, nu)`
/// inclusive, so the last `q_i` is evaluated from the raw formula.
pub fn q_nu(nu: u32, alpha: u32, beta: u32) -> Result<u32> {
    if nu == 0 {
        return Err(Error::invalid("q_nu requires nu >= 1"));
    }
    let m = m_steps(0, nu, alpha)?;
    let mut best = 0;
    for i in 1..=m {
        let q = q_formula(i, 0, nu, alpha);
        if q < 0 {
            return Err(Error::invalid(format!("q_{i}(0, {nu}) = {q} is negative")));
        }
        best = best.max(i * beta.max(kappa(1, q as u32, alpha, beta)?));
    }
    Ok(best)
}

/// `T(nu)`: the smallest point of the `T/n` grid that is `>= T (n - m) / (n (m + 1))`,
/// with `m = m(0, nu)`.
pub fn t_nu(horizon: f64, n: u32, nu: u32, alpha: u32) -> Result<f64> {
    let m = m_steps(0, nu, alpha)?;
    if n <= m {
        return Err(Error::GridTooCoarse { nu, n, m });
    }
    // k T / n >= T (n - m) / (n (m + 1))  <=>  k >= (n - m) / (m + 1)
    let k = ceil_div((n - m) as u64, (m + 1) as u64);
    Ok(k as f64 * horizon / n as f64)
}

/// Number of nested boosted levels below `level` (0 when `m(level, nu) <= 1`).
pub fn recursion_depth(level: u32, nu: u32, alpha: u32) -> Result<u32> {
    let m = m_steps(level, nu, alpha)?;
    let mut depth = 0;
    for i in 1..m {
        let q = q_order(i, level, nu, alpha)?;
        depth = depth.max(1 + recursion_depth(level + 1, q, alpha)?);
    }
    Ok(depth)
}

/// Orders and grid of one boosted approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderParams {
    pub alpha: u32,
    pub beta: u32,
    pub nu: u32,
    pub grid: GridSpec,
}

impl OrderParams {
    pub fn new(alpha: u32, beta: u32, nu: u32, grid: GridSpec) -> Result<Self> {
        check_alpha(alpha)?;
        if beta == 0 {
            return Err(Error::invalid("beta must be >= 1"));
        }
        Ok(OrderParams { alpha, beta, nu, grid })
    }

    /// Euler-type base scheme: `alpha = 1`, `beta = 2`.
    pub fn euler(nu: u32, horizon: f64, n: u32) -> Result<Self> {
        OrderParams::new(1, 2, nu, GridSpec::new(horizon, n)?)
    }

    pub fn n(&self) -> u32 {
        self.grid.n()
    }

    pub fn m(&self, level: u32, nu: u32) -> u32 {
        m_steps(level, nu, self.alpha).expect("alpha validated")
    }

    pub fn q(&self, i: u32, level: u32, nu: u32) -> Result<u32> {
        q_order(i, level, nu, self.alpha)
    }

    pub fn kappa(&self, level: u32) -> u32 {
        kappa(level, self.nu, self.alpha, self.beta).expect("alpha validated")
    }

    pub fn l_max(&self) -> u32 {
        l_max(self.nu, self.alpha).expect("alpha validated")
    }

    pub fn q_nu(&self) -> Result<u32> {
        q_nu(self.nu, self.alpha, self.beta)
    }

    pub fn t_nu(&self) -> Result<f64> {
        t_nu(self.grid.horizon(), self.grid.n(), self.nu, self.alpha)
    }

    /// One row per `(level, order, i)` visited by the recursion from `(0, nu)`.
    pub fn table(&self) -> Vec<ParamRow> {
        let mut rows = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        self.collect_rows(0, self.nu, &mut rows, &mut seen);
        rows
    }

    fn collect_rows(
        &self,
        level: u32,
        nu: u32,
        rows: &mut Vec<ParamRow>,
        seen: &mut std::collections::BTreeSet<(u32, u32)>,
    ) {
        if !seen.insert((level, nu)) {
            return;
        }
        let m = self.m(level, nu);
        let kappa = kappa(level, nu, self.alpha, self.beta).expect("alpha validated");
        if m <= 1 {
            rows.push(ParamRow { level, nu, i: None, m, q: None, kappa });
            return;
        }
        let mut children = Vec::new();
        for i in 1..m {
            let q = self.q(i, level, nu).expect("i in range");
            rows.push(ParamRow { level, nu, i: Some(i), m, q: Some(q), kappa });
            children.push(q);
        }
        for q in children {
            self.collect_rows(level + 1, q, rows, seen);
        }
    }
}

/// A line of the parameter table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRow {
    pub level: u32,
    pub nu: u32,
    pub i: Option<u32>,
    pub m: u32,
    pub q: Option<u32>,
    pub kappa: u32,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m_steps_examples() {
        assert_eq!(m_steps(0, 2, 1).unwrap(), 2);
        assert_eq!(m_steps(1, 3, 1).unwrap(), 1);
        assert_eq!(m_steps(0, 0, 1).unwrap(), 0);
        assert!(m_steps(0, 2, 0).is_err());
    }

    #[test]
    fn q_order_examples() {
        assert_eq!(q_order(1, 0, 3, 1).unwrap(), 4);
        assert_eq!(q_order(2, 0, 3, 1).unwrap(), 3);
        // m(0, 4) = 4 so i = 3 is admissible
        assert_eq!(q_order(3, 0, 4, 1).unwrap(), 3);
        assert!(q_order(0, 0, 3, 1).is_err());
        assert!(q_order(3, 0, 3, 1).is_err());
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa(1, 3, 1, 2).unwrap(), 2);
        assert_eq!(kappa(0, 2, 1, 2).unwrap(), 4);
        assert_eq!(kappa(0, 0, 1, 2).unwrap(), 0);
    }

    #[test]
    fn l_max_examples() {
        assert_eq!(l_max(2, 1).unwrap(), 2);
        assert_eq!(l_max(3, 2).unwrap(), 2);
        assert_eq!(l_max(0, 1).unwrap(), 0);
    }

    #[test]
    fn q_nu_examples() {
        assert_eq!(q_nu(2, 1, 2).unwrap(), 4);
        assert_eq!(q_nu(1, 1, 2).unwrap(), 2);
        assert_eq!(q_nu(1, 1, 1).unwrap(), 1);
        assert!(q_nu(0, 1, 2).is_err());
    }

    #[test]
    fn t_nu_examples() {
        assert!((t_nu(1.0, 4, 2, 1).unwrap() - 0.25).abs() < 1e-15);
        assert!((t_nu(1.0, 100, 1, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((t_nu(2.0, 2, 0, 1).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(t_nu(1.0, 2, 2, 1), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn grid_points_are_integer_indexed() {
        let g = GridSpec::new(1.0, 3).unwrap();
        let pts = g.points(2);
        assert_eq!(pts.len(), 10);
        assert_eq!(pts[0], 0.0);
        assert_eq!(pts[9], 1.0);
        assert_eq!(g.step_at(3) * 3.0, g.step_at(2));
        assert_eq!(g.index_of(2, 4.0 / 9.0), Some(4));
        assert_eq!(g.index_of(2, 0.5), None);
    }

    #[test]
    fn params_table_matches_hand_values() {
        let p = OrderParams::euler(2, 1.0, 4).unwrap();
        let rows = p.table();
        assert_eq!(rows[0], ParamRow { level: 0, nu: 2, i: Some(1), m: 2, q: Some(3), kappa: 4 });
        assert_eq!(rows[1], ParamRow { level: 1, nu: 3, i: None, m: 1, q: None, kappa: 2 });
        assert_eq!(p.q_nu().unwrap(), 4);
        assert_eq!(p.l_max(), 2);
    }
}
