//! Signed operator words of the boosted approximation.
//!
//! For a one-step interval `[s, s + T/n^l]` the boosted operator is
//!
//! ```text
//! Qhat^{nu, l} = Q^{l+1}  +  sum_{i=1}^{m(l,nu)-1}  Ihat_i
//! Ihat_i       = sum_{s = t_0 < t_1 < ... < t_i <= s + T/n^l}
//!                  prod_j  Q^{l+1}[t_{j-1}, t_j - d] (Qhat^{q_i, l+1} - Q^{l+1})[t_j - d, t_j]
//!                  Q^{l+1}[t_i, s + T/n^l]
//! ```
//!
//! where `d = T/n^{l+1}` and the `t_j` run over the level `l + 1` grid. Words
//! are ordered earliest interval first; the operator they denote is the
//! left-to-right composition, so `Q[a, b] Q[b, c] = Q[a, c]`.
//!
//! A `Base` atom may span zero fine steps (when `t_j = t_{j-1} + d`); it then
//! denotes the identity.

pub mod matrix;

use std::fmt;

use crate::error::{Error, Result};
use crate::order::OrderParams;

/// Which operator an atom stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AtomKind {
    /// The base discrete semigroup `Q^{T/n^level}`.
    Base,
    /// The boosted one-step operator `Qhat^{order, T/n^level}`.
    Boosted { order: u32 },
    /// The exact semigroup `P`. Only used in proof-decomposition words.
    Exact,
}

/// An operator over `[start, end]`, both indices on the `level` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OperatorAtom {
    pub kind: AtomKind,
    pub level: u32,
    pub start: u64,
    pub end: u64,
}

impl OperatorAtom {
    pub fn base(level: u32, start: u64, end: u64) -> Self {
        OperatorAtom { kind: AtomKind::Base, level, start, end }
    }

    pub fn boosted(order: u32, level: u32, start: u64) -> Self {
        OperatorAtom { kind: AtomKind::Boosted { order }, level, start, end: start + 1 }
    }

    pub fn exact(level: u32, start: u64, end: u64) -> Self {
        OperatorAtom { kind: AtomKind::Exact, level, start, end }
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

impl fmt::Display for OperatorAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            AtomKind::Base => write!(f, "Q[{}]({},{})", self.level, self.start, self.end),
            AtomKind::Boosted { order } => {
                write!(f, "Qhat^{}[{}]({},{})", order, self.level, self.start, self.end)
            }
            AtomKind::Exact => write!(f, "P[{}]({},{})", self.level, self.start, self.end),
        }
    }
}

/// One factor of a word: a single atom, or the difference of two atoms over
/// the same interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Single(OperatorAtom),
    Difference { plus: OperatorAtom, minus: OperatorAtom },
}

impl Factor {
    fn span(&self) -> (u32, u64, u64) {
        let a = match self {
            Factor::Single(a) => a,
            Factor::Difference { plus, .. } => plus,
        };
        (a.level, a.start, a.end)
    }

    pub fn atoms(&self) -> impl Iterator<Item = &OperatorAtom> {
        let (a, b) = match self {
            Factor::Single(a) => (a, None),
            Factor::Difference { plus, minus } => (plus, Some(minus)),
        };
        std::iter::once(a).chain(b)
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::Single(a) => write!(f, "{a}"),
            Factor::Difference { plus, minus } => write!(f, "({plus} - {minus})"),
        }
    }
}

/// A signed word: `sign * factor_1 factor_2 ... factor_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionTerm {
    pub sign: i8,
    pub factors: Vec<Factor>,
    /// Correction times `t_1 < ... < t_i` on the fine grid, as offsets from the
    /// interval start. Empty for the base word.
    pub grid_times: Vec<u64>,
    /// Recursion depth of the expansion that produced this word.
    pub depth: u32,
}

impl ExpansionTerm {
    /// Number of difference factors.
    pub fn differences(&self) -> usize {
        self.factors.iter().filter(|f| matches!(f, Factor::Difference { .. })).count()
    }

    /// Replace every difference factor by its two atoms, giving `2^k` signed
    /// words of single atoms.
    pub fn expand_differences(&self) -> Vec<ExpansionTerm> {
        let mut words = vec![ExpansionTerm {
            sign: self.sign,
            factors: Vec::with_capacity(self.factors.len()),
            grid_times: self.grid_times.clone(),
            depth: self.depth,
        }];
        for factor in &self.factors {
            match *factor {
                Factor::Single(a) => {
                    for w in &mut words {
                        w.factors.push(Factor::Single(a));
                    }
                }
                Factor::Difference { plus, minus } => {
                    let mut next = Vec::with_capacity(words.len() * 2);
                    for w in words {
                        let mut p = w.clone();
                        p.factors.push(Factor::Single(plus));
                        let mut m = w;
                        m.sign = -m.sign;
                        m.factors.push(Factor::Single(minus));
                        next.push(p);
                        next.push(m);
                    }
                    words = next;
                }
            }
        }
        words
    }

    /// Check that the factors tile `[start, end]` (indices on `level`)
    /// without gaps or overlaps. `n` is the refinement factor.
    pub fn check_tiling(&self, n: u32, level: u32, start: u64, end: u64) -> Result<()> {
        let finest = self
            .factors
            .iter()
            .map(|f| f.span().0)
            .chain(std::iter::once(level))
            .max()
            .unwrap_or(level);
        let lift = |lvl: u32, idx: u64| idx * (n as u64).pow(finest - lvl);
        let mut cursor = lift(level, start);
        for factor in &self.factors {
            let (lvl, s, e) = factor.span();
            if let Factor::Difference { plus, minus } = factor {
                if (plus.level, plus.start, plus.end) != (minus.level, minus.start, minus.end) {
                    return Err(Error::Invariant(format!("difference over mismatched intervals: {factor}")));
                }
            }
            if lift(lvl, s) != cursor || e < s {
                return Err(Error::Invariant(format!("word does not tile at {factor}: {self}")));
            }
            cursor = lift(lvl, e);
        }
        if cursor != lift(level, end) {
            return Err(Error::Invariant(format!("word stops short of the interval end: {self}")));
        }
        Ok(())
    }
}

impl fmt::Display for ExpansionTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", if self.sign >= 0 { '+' } else { '-' })?;
        for factor in &self.factors {
            write!(f, " {factor}")?;
        }
        Ok(())
    }
}

/// Strictly increasing `i`-tuples drawn from `1..=m`, in lexicographic order.
pub fn increasing_tuples(m: u64, i: usize) -> Vec<Vec<u64>> {
    fn rec(next: u64, m: u64, left: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        let mut t = next;
        while t + left as u64 - 1 <= m {
            cur.push(t);
            rec(t + 1, m, left - 1, cur, out);
            cur.pop();
            t += 1;
        }
    }
    let mut out = Vec::new();
    rec(1, m, i, &mut Vec::with_capacity(i), &mut out);
    out
}

/// Builds the word for one correction tuple. `make_diff(a)` turns the fine
/// one-step interval starting at absolute fine index `a` into a factor;
/// `closing` builds the final atom over `[t_i, end]`.
fn tuple_word(
    fine: u32,
    fine_start: u64,
    n: u64,
    tuple: &[u64],
    depth: u32,
    make_diff: impl Fn(u64) -> Factor,
    closing: impl Fn(u64, u64) -> OperatorAtom,
) -> ExpansionTerm {
    let mut factors = Vec::with_capacity(2 * tuple.len() + 1);
    let mut prev = 0;
    for &t in tuple {
        factors.push(Factor::Single(OperatorAtom::base(fine, fine_start + prev, fine_start + t - 1)));
        factors.push(make_diff(fine_start + t - 1));
        prev = t;
    }
    factors.push(Factor::Single(closing(fine_start + prev, fine_start + n)));
    ExpansionTerm { sign: 1, factors, grid_times: tuple.to_vec(), depth }
}

fn base_word(fine: u32, fine_start: u64, n: u64, depth: u32) -> ExpansionTerm {
    ExpansionTerm {
        sign: 1,
        factors: vec![Factor::Single(OperatorAtom::base(fine, fine_start, fine_start + n))],
        grid_times: Vec::new(),
        depth,
    }
}

/// Top-level words of `Qhat^{nu, T/n^level}` over the level step `[start, start + 1]`.
///
/// The first word is the fine base word; it is followed by the correction words
/// for `i = 1, ..., m - 1`, each holding `i` (boosted - base) difference factors.
/// Boosted atoms are left unexpanded.
pub fn expansion_at(params: &OrderParams, level: u32, nu: u32, start: u64, depth: u32) -> Vec<ExpansionTerm> {
    let n = params.n() as u64;
    let fine = level + 1;
    let fine_start = start * n;
    let m = params.m(level, nu);
    let mut terms = vec![base_word(fine, fine_start, n, depth)];
    for i in 1..m {
        let q = params.q(i, level, nu).expect("i < m");
        for tuple in increasing_tuples(n, i as usize) {
            terms.push(tuple_word(
                fine,
                fine_start,
                n,
                &tuple,
                depth,
                |a| Factor::Difference {
                    plus: OperatorAtom::boosted(q, fine, a),
                    minus: OperatorAtom::base(fine, a, a + 1),
                },
                |s, e| OperatorAtom::base(fine, s, e),
            ));
        }
    }
    terms
}

fn aligned_start(params: &OrderParams, level: u32, s: f64, t: f64) -> Result<u64> {
    let grid = params.grid;
    match (grid.index_of(level, s), grid.index_of(level, t)) {
        (Some(a), Some(b)) if b == a + 1 => Ok(a),
        _ => Err(Error::Misaligned { level, start: s, end: t }),
    }
}

/// Words of `Qhat^{params.nu, T/n^level}_{s,t}`; requires `t - s = T/n^level`
/// with both ends on the level grid.
pub fn build_expansion(params: &OrderParams, level: u32, s: f64, t: f64) -> Result<Vec<ExpansionTerm>> {
    let start = aligned_start(params, level, s, t)?;
    Ok(expansion_at(params, level, params.nu, start, 0))
}

/// The exact telescoping representation of `P` over one level step:
///
/// `P = Q^{l+1} + sum_{i < m} I_i + R_m`, where `I_i` has `(P - Q)` difference
/// factors in place of `(Qhat - Q)` and `R_m` closes with `P`.
#[derive(Debug, Clone)]
pub struct ProofDecomposition {
    pub base: ExpansionTerm,
    /// `corrections[i - 1]` holds the words of `I_i`.
    pub corrections: Vec<Vec<ExpansionTerm>>,
    pub remainder: Vec<ExpansionTerm>,
    /// The `m` used for the remainder (`max(m(l, nu), 1)`).
    pub m: u32,
}

impl ProofDecomposition {
    /// All words, base first.
    pub fn all_terms(&self) -> Vec<ExpansionTerm> {
        let mut out = vec![self.base.clone()];
        out.extend(self.corrections.iter().flatten().cloned());
        out.extend(self.remainder.iter().cloned());
        out
    }
}

pub fn decomposition_at(params: &OrderParams, level: u32, nu: u32, start: u64) -> ProofDecomposition {
    let n = params.n() as u64;
    let fine = level + 1;
    let fine_start = start * n;
    // nu = 0 has m = 0; the telescope still needs one remainder factor.
    let m = params.m(level, nu).max(1);
    let exact_minus_base = |a: u64| Factor::Difference {
        plus: OperatorAtom::exact(fine, a, a + 1),
        minus: OperatorAtom::base(fine, a, a + 1),
    };
    let corrections = (1..m)
        .map(|i| {
            increasing_tuples(n, i as usize)
                .iter()
                .map(|tuple| {
                    tuple_word(fine, fine_start, n, tuple, 0, exact_minus_base, |s, e| {
                        OperatorAtom::base(fine, s, e)
                    })
                })
                .collect()
        })
        .collect();
    let remainder = increasing_tuples(n, m as usize)
        .iter()
        .map(|tuple| {
            tuple_word(fine, fine_start, n, tuple, 0, exact_minus_base, |s, e| {
                OperatorAtom::exact(fine, s, e)
            })
        })
        .collect();
    ProofDecomposition { base: base_word(fine, fine_start, n, 0), corrections, remainder, m }
}

pub fn build_proof_decomposition(params: &OrderParams, level: u32, s: f64, t: f64) -> Result<ProofDecomposition> {
    let start = aligned_start(params, level, s, t)?;
    Ok(decomposition_at(params, level, params.nu, start))
}

/// One word of the split of `I_i - Ihat_i` over a fixed tuple.
///
/// Each of the `i` slots holds either `(Q - P)` or `(P - Qhat^{q_i})`, chosen by
/// the bits of `h`. The choice with every slot equal to `(Q - P)` cancels and is
/// marked `excluded`; the remaining `2^i - 1` words all carry sign `(-1)^{i+1}`.
#[derive(Debug, Clone)]
pub struct SplitWord {
    pub h: u32,
    pub excluded: bool,
    pub term: ExpansionTerm,
}

/// The `2^i` words per tuple of `I_i - Ihat_i`, for every tuple, at level `level`.
pub fn error_split_words(params: &OrderParams, level: u32, nu: u32, start: u64, i: u32) -> Result<Vec<SplitWord>> {
    let q = params.q(i, level, nu)?;
    let n = params.n() as u64;
    let fine = level + 1;
    let fine_start = start * n;
    let sign = if i % 2 == 1 { 1 } else { -1 };
    let mut out = Vec::new();
    for tuple in increasing_tuples(n, i as usize) {
        for h in 0..(1u32 << i) {
            let mut term = tuple_word(
                fine,
                fine_start,
                n,
                &tuple,
                0,
                |a| Factor::Single(OperatorAtom::base(fine, a, a + 1)),
                |s, e| OperatorAtom::base(fine, s, e),
            );
            // slot k is the k-th one-step factor ending at a correction time
            for (k, &t) in tuple.iter().enumerate() {
                let a = fine_start + t - 1;
                let idx = 2 * k + 1;
                term.factors[idx] = if h >> k & 1 == 1 {
                    Factor::Difference {
                        plus: OperatorAtom::exact(fine, a, a + 1),
                        minus: OperatorAtom::boosted(q, fine, a),
                    }
                } else {
                    Factor::Difference {
                        plus: OperatorAtom::base(fine, a, a + 1),
                        minus: OperatorAtom::exact(fine, a, a + 1),
                    }
                };
            }
            term.sign = sign;
            out.push(SplitWord { h, excluded: h == 0, term });
        }
    }
    Ok(out)
}

/// Pretty lines for the word tree: the top-level words, then the expansion of
/// each distinct boosted operator they cite, indented by recursion depth.
pub fn expansion_tree(params: &OrderParams, level: u32) -> Vec<String> {
    let mut lines = Vec::new();
    let mut visited = std::collections::BTreeSet::new();
    tree_rec(params, level, params.nu, 0, &mut lines, &mut visited);
    lines
}

fn tree_rec(
    params: &OrderParams,
    level: u32,
    nu: u32,
    depth: u32,
    lines: &mut Vec<String>,
    visited: &mut std::collections::BTreeSet<(u32, u32)>,
) {
    if !visited.insert((nu, level)) {
        return;
    }
    let indent = "  ".repeat(depth as usize);
    lines.push(format!("{indent}Qhat^{nu}[{level}](0,1) := depth {depth}"));
    let terms = expansion_at(params, level, nu, 0, depth);
    let mut cited = std::collections::BTreeSet::new();
    for term in &terms {
        lines.push(format!("{indent}  {term}    depth={depth}"));
        for atom in term.factors.iter().flat_map(|f| f.atoms()) {
            if let AtomKind::Boosted { order } = atom.kind {
                cited.insert((order, atom.level));
            }
        }
    }
    for (order, lvl) in cited {
        tree_rec(params, lvl, order, depth + 1, lines, visited);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(nu: u32, n: u32) -> OrderParams {
        OrderParams::euler(nu, 1.0, n).unwrap()
    }

    #[test]
    fn order_one_is_the_fine_base_word() {
        let terms = build_expansion(&params(1, 4), 0, 0.0, 1.0).unwrap();
        assert_eq!(terms.len(), 1);
        assert_eq!(terms[0].factors, vec![Factor::Single(OperatorAtom::base(1, 0, 4))]);
    }

    #[test]
    fn order_two_has_one_correction_per_fine_point() {
        let terms = build_expansion(&params(2, 4), 0, 0.0, 1.0).unwrap();
        assert_eq!(terms.len(), 1 + 4);
        for t in &terms[1..] {
            assert_eq!(t.differences(), 1);
        }
    }

    #[test]
    fn order_three_term_count_and_cited_orders() {
        let terms = build_expansion(&params(3, 4), 0, 0.0, 1.0).unwrap();
        assert_eq!(terms.len(), 1 + 4 + 6);
        for t in &terms[1..] {
            let expected = if t.grid_times.len() == 1 { 4 } else { 3 };
            for f in &t.factors {
                if let Factor::Difference { plus, .. } = f {
                    assert_eq!(plus.kind, AtomKind::Boosted { order: expected });
                }
            }
        }
    }

    #[test]
    fn words_tile_their_interval() {
        let p = params(3, 5);
        for t in expansion_at(&p, 1, 4, 7, 0) {
            t.check_tiling(5, 1, 7, 8).unwrap();
        }
        let d = decomposition_at(&p, 0, 3, 0);
        for t in d.all_terms() {
            t.check_tiling(5, 0, 0, 1).unwrap();
        }
    }

    #[test]
    fn misaligned_interval_is_rejected() {
        let p = params(2, 4);
        assert!(matches!(build_expansion(&p, 1, 0.1, 0.35), Err(Error::Misaligned { .. })));
        assert!(matches!(build_expansion(&p, 1, 0.0, 0.5), Err(Error::Misaligned { .. })));
        assert!(build_expansion(&p, 1, 0.25, 0.5).is_ok());
    }

    #[test]
    fn difference_expansion_doubles_per_factor() {
        let terms = expansion_at(&params(3, 4), 0, 3, 0, 0);
        let two = terms.iter().find(|t| t.differences() == 2).unwrap();
        let words = two.expand_differences();
        assert_eq!(words.len(), 4);
        let signs: i32 = words.iter().map(|w| w.sign as i32).sum();
        assert_eq!(signs, 0);
    }

    #[test]
    fn split_words_per_tuple() {
        let p = params(3, 3);
        let words = error_split_words(&p, 0, 3, 0, 2).unwrap();
        assert_eq!(words.len(), 3 * 4);
        assert_eq!(words.iter().filter(|w| w.excluded).count(), 3);
        assert!(words.iter().all(|w| w.term.sign == -1));
    }

    #[test]
    fn tuples_are_binomial() {
        assert_eq!(increasing_tuples(4, 0), vec![Vec::<u64>::new()]);
        assert_eq!(increasing_tuples(4, 2).len(), 6);
        assert_eq!(increasing_tuples(5, 5), vec![vec![1, 2, 3, 4, 5]]);
        assert!(increasing_tuples(3, 4).is_empty());
    }
}
