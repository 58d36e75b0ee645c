//! Boolean constraint programs and their lowering to a 0-1 MILP.
//!
//! Every Boolean variable `v` gets a numerical variable `x_v` with bounds
//! `0 <= x_v <= 1`, integer-constrained, and an objective weight `c_v`
//! (0 unless the variable is a weighting variable). The mid-level calls
//! lower to linear rows over a polarity sum `P` and a negativity count `N`:
//!
//! - `make_conj(L)` introduces `x_k` with
//!   `|L| x_k - P(L) <= N(L)` and `-|L| x_k + P(L) <= |L| - 1 - N(L)`,
//!   so `x_k = 1` exactly when all literals hold.
//! - `cnstr_implies_disj(i, L)` adds `P(i) - P(L) <= -N(i) + N(L)`;
//!   the soft form subtracts a fresh weighting variable `x_w` from the left
//!   side and sets `c_w` to the weight.
//! - `cnstr_count(L, a, b)` adds `a - N(L) <= P(L) <= b - N(L)`; the soft
//!   form adds `|L| x_a` on the lower side and `-|L| x_b` on the upper side
//!   (one merged variable when `L` is a single literal, where only one side
//!   can ever fire).
//!
//! Programs keep the mid-level constraint list alongside the rows so the
//! solver module can also export weighted CNF.

mod problems;

pub use problems::{
    build_pattern_level_problem, build_repair_problem, build_unsolvable_problem, LazyReachability,
    RepairProblemOptions,
};

use thiserror::Error;

use crate::level::{Level, TileKind};

pub type VarId = u32;

/// A Boolean variable with a polarity: `v` or `not v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Literal {
    pub var: VarId,
    pub positive: bool,
}

impl Literal {
    pub fn pos(var: VarId) -> Literal {
        Literal { var, positive: true }
    }

    pub fn neg(var: VarId) -> Literal {
        Literal { var, positive: false }
    }

    pub fn negated(self) -> Literal {
        Literal { var: self.var, positive: !self.positive }
    }

    /// Truth value under a 0/1 assignment.
    pub fn holds(self, assignment: &[u8]) -> bool {
        (assignment[self.var as usize] == 1) == self.positive
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CspError {
    #[error("conjunction over an empty literal list")]
    EmptyConjunction,
    #[error("disjunction over an empty literal list")]
    EmptyDisjunction,
    #[error("soft constraint weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("count bounds {lo}..{hi} invalid for {len} literals")]
    BadBounds { lo: usize, hi: usize, len: usize },
    #[error("weight grid is {w_rows}x{w_cols} but level is {l_rows}x{l_cols}")]
    DimensionMismatch { w_rows: usize, w_cols: usize, l_rows: usize, l_cols: usize },
    #[error("assignment does not decode to a level: {0}")]
    DecodeError(String),
}

/// One linear row: `lb <= sum(coeff * x_var) <= ub` with optional bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub terms: Vec<(VarId, i64)>,
    pub lb: Option<i64>,
    pub ub: Option<i64>,
}

impl Row {
    pub fn eval(&self, assignment: &[u8]) -> i64 {
        self.terms.iter().map(|(v, c)| *c * assignment[*v as usize] as i64).sum()
    }

    pub fn satisfied(&self, assignment: &[u8]) -> bool {
        let value = self.eval(assignment);
        self.lb.map_or(true, |lb| value >= lb) && self.ub.map_or(true, |ub| value <= ub)
    }
}

/// The mid-level constraint as issued, kept for CNF export and debugging.
#[derive(Debug, Clone, PartialEq)]
pub enum BoolConstraint {
    Conj { out: VarId, lits: Vec<Literal> },
    ImpliesDisj { cond: Literal, disj: Vec<Literal>, weight: Option<f64> },
    Count { lits: Vec<Literal>, lo: usize, hi: usize, weight: Option<f64> },
}

/// Sum of `+x_v` for positive literals and `-x_v` for negative ones, with
/// repeated variables accumulated.
pub fn polarity_sum(lits: &[Literal]) -> Vec<(VarId, i64)> {
    let mut terms: Vec<(VarId, i64)> = Vec::with_capacity(lits.len());
    for lit in lits {
        let coeff = if lit.positive { 1 } else { -1 };
        match terms.iter_mut().find(|(v, _)| *v == lit.var) {
            Some((_, c)) => *c += coeff,
            None => terms.push((lit.var, coeff)),
        }
    }
    terms.retain(|(_, c)| *c != 0);
    terms
}

/// Number of negative literals in the list.
pub fn negativity_count(lits: &[Literal]) -> i64 {
    lits.iter().filter(|l| !l.positive).count() as i64
}

/// A 0-1 constraint program: variables, objective weights, linear rows, and
/// the mid-level Boolean view.
#[derive(Debug, Clone, Default)]
pub struct ConstraintProgram {
    weights: Vec<f64>,
    rows: Vec<Row>,
    bool_view: Vec<BoolConstraint>,
    has_raw_rows: bool,
    pub(crate) lazy: Option<LazyReachability>,
}

impl ConstraintProgram {
    pub fn new() -> ConstraintProgram {
        ConstraintProgram::default()
    }

    /// Fresh variable with bounds [0, 1], integer, weight 0.
    pub fn make_var(&mut self) -> VarId {
        self.weights.push(0.0);
        (self.weights.len() - 1) as VarId
    }

    pub fn num_vars(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, var: VarId) -> f64 {
        self.weights[var as usize]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sets an objective weight directly (used for diversity objectives in
    /// generation). Mid-level soft constraints manage their own weights.
    pub fn set_weight(&mut self, var: VarId, weight: f64) {
        self.weights[var as usize] = weight;
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn bool_view(&self) -> &[BoolConstraint] {
        &self.bool_view
    }

    pub fn has_raw_rows(&self) -> bool {
        self.has_raw_rows
    }

    pub fn lazy_reachability(&self) -> Option<&LazyReachability> {
        self.lazy.as_ref()
    }

    /// Adds a raw MILP row, bypassing the Boolean view. Programs with raw
    /// rows cannot be exported as WCNF.
    pub fn add_row(&mut self, row: Row) {
        self.has_raw_rows = true;
        self.rows.push(row);
    }

    fn push_row(&mut self, terms: Vec<(VarId, i64)>, lb: Option<i64>, ub: Option<i64>) {
        self.rows.push(Row { terms, lb, ub });
    }

    /// Conjunction variable: the returned positive literal is true in a
    /// feasible point iff every literal in `lits` is true.
    pub fn make_conj(&mut self, lits: &[Literal]) -> Result<Literal, CspError> {
        if lits.is_empty() {
            return Err(CspError::EmptyConjunction);
        }
        let n = lits.len() as i64;
        let neg = negativity_count(lits);
        let kappa = self.make_var();
        let p = polarity_sum(lits);

        let mut low = vec![(kappa, n)];
        low.extend(p.iter().map(|(v, c)| (*v, -c)));
        self.push_row(low, None, Some(neg));

        let mut high = vec![(kappa, -n)];
        high.extend(p.iter().copied());
        self.push_row(high, None, Some(n - 1 - neg));

        self.bool_view.push(BoolConstraint::Conj { out: kappa, lits: lits.to_vec() });
        Ok(Literal::pos(kappa))
    }

    /// `cond` implies the disjunction of `disj`. With a weight, violations
    /// cost `weight` through a fresh weighting variable instead of being
    /// forbidden.
    pub fn cnstr_implies_disj(
        &mut self,
        cond: Literal,
        disj: &[Literal],
        weight: Option<f64>,
    ) -> Result<(), CspError> {
        if disj.is_empty() {
            return Err(CspError::EmptyDisjunction);
        }
        let mut terms = polarity_sum(&[cond]);
        for (v, c) in polarity_sum(disj) {
            match terms.iter_mut().find(|(tv, _)| *tv == v) {
                Some((_, tc)) => *tc -= c,
                None => terms.push((v, -c)),
            }
        }
        terms.retain(|(_, c)| *c != 0);
        let ub = -negativity_count(&[cond]) + negativity_count(disj);
        if let Some(w) = weight {
            if w <= 0.0 {
                return Err(CspError::NonPositiveWeight(w));
            }
            let omega = self.make_var();
            self.weights[omega as usize] = w;
            terms.push((omega, -1));
        }
        self.push_row(terms, None, Some(ub));
        self.bool_view.push(BoolConstraint::ImpliesDisj { cond, disj: disj.to_vec(), weight });
        Ok(())
    }

    /// Between `lo` and `hi` (inclusive) of the literals are true. With a
    /// weight, each violated side costs `weight` through weighting variables
    /// relaxing that side.
    pub fn cnstr_count(
        &mut self,
        lits: &[Literal],
        lo: usize,
        hi: usize,
        weight: Option<f64>,
    ) -> Result<(), CspError> {
        if lo > hi || hi > lits.len() {
            return Err(CspError::BadBounds { lo, hi, len: lits.len() });
        }
        let n = lits.len() as i64;
        let neg = negativity_count(lits);
        let p = polarity_sum(lits);
        match weight {
            None => {
                self.push_row(p, Some(lo as i64 - neg), Some(hi as i64 - neg));
            }
            Some(w) => {
                if w <= 0.0 {
                    return Err(CspError::NonPositiveWeight(w));
                }
                if lits.len() == 1 {
                    // one weighting variable covers both sides: a single
                    // literal can only ever violate one of them
                    let omega = self.make_var();
                    self.weights[omega as usize] = w;
                    let mut low = p.clone();
                    low.push((omega, 1));
                    self.push_row(low, Some(lo as i64 - neg), None);
                    let mut high = p;
                    high.push((omega, -1));
                    self.push_row(high, None, Some(hi as i64 - neg));
                } else {
                    let alpha = self.make_var();
                    self.weights[alpha as usize] = w;
                    let beta = self.make_var();
                    self.weights[beta as usize] = w;
                    let mut low = p.clone();
                    low.push((alpha, n));
                    self.push_row(low, Some(lo as i64 - neg), None);
                    let mut high = p;
                    high.push((beta, -n));
                    self.push_row(high, None, Some(hi as i64 - neg));
                }
            }
        }
        self.bool_view.push(BoolConstraint::Count { lits: lits.to_vec(), lo, hi, weight });
        Ok(())
    }

    /// True when every row holds under the full 0/1 assignment.
    pub fn feasible(&self, assignment: &[u8]) -> bool {
        self.rows.iter().all(|r| r.satisfied(assignment))
    }

    /// Objective value `c . x`.
    pub fn objective(&self, assignment: &[u8]) -> f64 {
        self.weights
            .iter()
            .zip(assignment.iter())
            .map(|(w, x)| w * *x as f64)
            .sum()
    }
}

/// Mapping between level cells and tile variables, plus decoding.
#[derive(Debug, Clone)]
pub struct VarMap {
    rows: usize,
    cols: usize,
    /// `(r * cols + c) * 4 + channel`
    tile: Vec<VarId>,
}

impl VarMap {
    pub(crate) fn allocate(prog: &mut ConstraintProgram, rows: usize, cols: usize) -> VarMap {
        let tile = (0..rows * cols * 4).map(|_| prog.make_var()).collect();
        VarMap { rows, cols, tile }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tile_var(&self, row: usize, col: usize, kind: TileKind) -> VarId {
        self.tile[(row * self.cols + col) * 4 + kind.channel()]
    }

    pub fn tile_lit(&self, row: usize, col: usize, kind: TileKind) -> Literal {
        Literal::pos(self.tile_var(row, col, kind))
    }

    /// Reads the one-hot tile variables out of a full assignment.
    pub fn decode_level(&self, assignment: &[u8], domain: &str) -> Result<Level, CspError> {
        let mut cells = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let mut kind = None;
                for k in TileKind::ALL {
                    if assignment[self.tile_var(r, c, k) as usize] == 1 {
                        if kind.is_some() {
                            return Err(CspError::DecodeError(format!(
                                "cell ({r},{c}) has two kinds set"
                            )));
                        }
                        kind = Some(k);
                    }
                }
                cells.push(kind.ok_or_else(|| {
                    CspError::DecodeError(format!("cell ({r},{c}) has no kind set"))
                })?);
            }
        }
        Level::new(self.rows, self.cols, cells, domain)
            .map_err(|e| CspError::DecodeError(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assignments(n: usize) -> impl Iterator<Item = Vec<u8>> {
        (0..1usize << n).map(move |bits| (0..n).map(|i| ((bits >> i) & 1) as u8).collect())
    }

    /// All feasible completions of the fixed prefix over the remaining vars.
    fn feasible_completions(prog: &ConstraintProgram, prefix: &[u8]) -> Vec<Vec<u8>> {
        let extra = prog.num_vars() - prefix.len();
        let mut out = Vec::new();
        for tail in assignments(extra) {
            let mut full = prefix.to_vec();
            full.extend(tail);
            if prog.feasible(&full) {
                out.push(full);
            }
        }
        out
    }

    #[test]
    fn polarity_and_negativity() {
        let (i, j) = (0, 1);
        let lits = [Literal::pos(i), Literal::neg(j)];
        assert_eq!(polarity_sum(&lits), vec![(i, 1), (j, -1)]);
        assert_eq!(negativity_count(&lits), 1);

        assert_eq!(polarity_sum(&[]), vec![]);
        assert_eq!(negativity_count(&[Literal::pos(i), Literal::pos(j)]), 0);

        let twice = [Literal::neg(i), Literal::neg(i)];
        assert_eq!(polarity_sum(&twice), vec![(i, -2)]);
        assert_eq!(negativity_count(&twice), 2);
    }

    #[test]
    fn fresh_vars_are_distinct_and_unweighted() {
        let mut prog = ConstraintProgram::new();
        let a = prog.make_var();
        let b = prog.make_var();
        assert_ne!(a, b);
        assert_eq!(prog.weight(a), 0.0);
        assert!(prog.rows().is_empty());
    }

    #[test]
    fn single_literal_conjunction_mirrors_literal() {
        let mut prog = ConstraintProgram::new();
        let i = prog.make_var();
        let kappa = prog.make_conj(&[Literal::pos(i)]).unwrap();
        for xi in [0u8, 1] {
            for completion in feasible_completions(&prog, &[xi]) {
                assert_eq!(completion[kappa.var as usize], xi);
            }
            assert_eq!(feasible_completions(&prog, &[xi]).len(), 1);
        }
    }

    #[test]
    fn conjunction_truth_table_two_literals() {
        let mut prog = ConstraintProgram::new();
        let i = prog.make_var();
        let j = prog.make_var();
        let kappa = prog.make_conj(&[Literal::pos(i), Literal::neg(j)]).unwrap();
        for prefix in assignments(2) {
            let expected = (prefix[0] == 1 && prefix[1] == 0) as u8;
            let completions = feasible_completions(&prog, &prefix);
            assert_eq!(completions.len(), 1, "kappa must be forced");
            assert_eq!(completions[0][kappa.var as usize], expected);
        }
    }

    #[test]
    fn conjunction_truth_table_three_positives() {
        let mut prog = ConstraintProgram::new();
        let vars: Vec<VarId> = (0..3).map(|_| prog.make_var()).collect();
        let lits: Vec<Literal> = vars.iter().map(|v| Literal::pos(*v)).collect();
        let kappa = prog.make_conj(&lits).unwrap();
        for prefix in assignments(3) {
            let expected = prefix.iter().all(|x| *x == 1) as u8;
            let completions = feasible_completions(&prog, &prefix);
            assert_eq!(completions.len(), 1);
            assert_eq!(completions[0][kappa.var as usize], expected);
        }
    }

    #[test]
    fn empty_conjunction_rejected() {
        let mut prog = ConstraintProgram::new();
        assert_eq!(prog.make_conj(&[]).unwrap_err(), CspError::EmptyConjunction);
    }

    #[test]
    fn implies_disj_hard() {
        let mut prog = ConstraintProgram::new();
        let i = prog.make_var();
        let j = prog.make_var();
        prog.cnstr_implies_disj(Literal::pos(i), &[Literal::pos(j)], None).unwrap();
        for prefix in assignments(2) {
            let violates = prefix[0] == 1 && prefix[1] == 0;
            assert_eq!(prog.feasible(&prefix), !violates);
        }
    }

    #[test]
    fn implies_disj_negative_condition() {
        let mut prog = ConstraintProgram::new();
        let i = prog.make_var();
        let j = prog.make_var();
        // not i -> not j: infeasible exactly at (i=0, j=1)
        prog.cnstr_implies_disj(Literal::neg(i), &[Literal::neg(j)], None).unwrap();
        for prefix in assignments(2) {
            let violates = prefix[0] == 0 && prefix[1] == 1;
            assert_eq!(prog.feasible(&prefix), !violates);
        }
    }

    #[test]
    fn implies_disj_soft_costs_weight() {
        let mut prog = ConstraintProgram::new();
        let i = prog.make_var();
        let j = prog.make_var();
        prog.cnstr_implies_disj(Literal::pos(i), &[Literal::pos(j)], Some(5.0)).unwrap();
        // forced i=1, j=0: only feasible with the weighting variable at 1
        let completions = feasible_completions(&prog, &[1, 0]);
        assert!(!completions.is_empty());
        let best = completions
            .iter()
            .map(|a| prog.objective(a))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best, 5.0);
        // satisfied assignments cost nothing
        let best_ok = feasible_completions(&prog, &[1, 1])
            .iter()
            .map(|a| prog.objective(a))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best_ok, 0.0);
    }

    #[test]
    fn nonpositive_weight_rejected() {
        let mut prog = ConstraintProgram::new();
        let i = prog.make_var();
        assert!(matches!(
            prog.cnstr_implies_disj(Literal::pos(i), &[Literal::pos(i)], Some(0.0)),
            Err(CspError::NonPositiveWeight(_))
        ));
        assert!(matches!(
            prog.cnstr_count(&[Literal::pos(i)], 0, 1, Some(-1.0)),
            Err(CspError::NonPositiveWeight(_))
        ));
    }

    #[test]
    fn count_vacuous_and_forcing() {
        let mut prog = ConstraintProgram::new();
        let vars: Vec<VarId> = (0..3).map(|_| prog.make_var()).collect();
        let lits: Vec<Literal> = vars.iter().map(|v| Literal::pos(*v)).collect();
        prog.cnstr_count(&lits, 0, 3, None).unwrap();
        for a in assignments(3) {
            assert!(prog.feasible(&a));
        }

        let mut prog = ConstraintProgram::new();
        let vars: Vec<VarId> = (0..3).map(|_| prog.make_var()).collect();
        let lits: Vec<Literal> = vars.iter().map(|v| Literal::pos(*v)).collect();
        prog.cnstr_count(&lits, 3, 3, None).unwrap();
        for a in assignments(3) {
            assert_eq!(prog.feasible(&a), a.iter().all(|x| *x == 1));
        }
    }

    #[test]
    fn count_window_with_mixed_literals() {
        let mut prog = ConstraintProgram::new();
        let vars: Vec<VarId> = (0..3).map(|_| prog.make_var()).collect();
        let lits = [Literal::pos(vars[0]), Literal::neg(vars[1]), Literal::pos(vars[2])];
        prog.cnstr_count(&lits, 1, 2, None).unwrap();
        for a in assignments(3) {
            let true_count = lits.iter().filter(|l| l.holds(&a)).count();
            assert_eq!(prog.feasible(&a), (1..=2).contains(&true_count));
        }
    }

    #[test]
    fn count_bad_bounds() {
        let mut prog = ConstraintProgram::new();
        let i = prog.make_var();
        assert!(matches!(
            prog.cnstr_count(&[Literal::pos(i)], 2, 2, None),
            Err(CspError::BadBounds { .. })
        ));
        assert!(matches!(
            prog.cnstr_count(&[Literal::pos(i)], 1, 0, None),
            Err(CspError::BadBounds { .. })
        ));
    }

    #[test]
    fn soft_count_violation_costs() {
        // two literals, between 1 and 1 true, weight 3
        let mut prog = ConstraintProgram::new();
        let a = prog.make_var();
        let b = prog.make_var();
        prog.cnstr_count(&[Literal::pos(a), Literal::pos(b)], 1, 1, Some(3.0)).unwrap();
        let min_cost = |prefix: &[u8]| {
            feasible_completions(&prog, prefix)
                .iter()
                .map(|x| prog.objective(x))
                .fold(f64::INFINITY, f64::min)
        };
        assert_eq!(min_cost(&[0, 0]), 3.0); // too few
        assert_eq!(min_cost(&[1, 1]), 3.0); // too many
        assert_eq!(min_cost(&[1, 0]), 0.0);
        assert_eq!(min_cost(&[0, 1]), 0.0);
    }

    #[test]
    fn soft_single_literal_count_is_merged() {
        let mut prog = ConstraintProgram::new();
        let a = prog.make_var();
        prog.cnstr_count(&[Literal::pos(a)], 1, 1, Some(7.0)).unwrap();
        // exactly one weighting variable was created
        assert_eq!(prog.num_vars(), 2);
        let min_cost = |prefix: &[u8]| {
            feasible_completions(&prog, prefix)
                .iter()
                .map(|x| prog.objective(x))
                .fold(f64::INFINITY, f64::min)
        };
        assert_eq!(min_cost(&[0]), 7.0);
        assert_eq!(min_cost(&[1]), 0.0);
    }
}
