//! The odds-algorithm for stopping on the last success.
//!
//! An [`OddsProblem`] holds success probabilities `p_1..p_n` of independent
//! indicators. With `q_k = 1 - p_k` and odds `r_k = p_k / q_k`, the optimal
//! rule stops at the first success at or after the threshold `s`, the largest
//! index whose tail odds sum `R(s,n)` reaches 1 (or `s = 1` if no index
//! does). The win probability is `Q(s,n) R(s,n)` where `Q(s,n)` is the tail
//! product of the `q_j`.
//!
//! A probability of exactly 1 makes every tail sum that contains it infinite
//! and the matching tail product zero. The threshold then sits on the last
//! such index and the value collapses to `Q(s+1,n)`.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::oracle::{self, StopSet};
use crate::scalar::{ArithmeticMode, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("probability sequence is empty")]
    EmptySequence,
    #[error("probability at index {index} is out of range [0, 1]: {value}")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("index {index} is out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },
}

/// Odds or a tail sum of odds, with an explicit infinite case for `p = 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Odds<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> Odds<T> {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Odds::Infinite)
    }

    pub fn finite(&self) -> Option<&T> {
        match self {
            Odds::Finite(v) => Some(v),
            Odds::Infinite => None,
        }
    }

    /// `R >= 1` with plain comparison (infinity counts as at least one).
    pub fn at_least_one(&self) -> bool {
        match self {
            Odds::Finite(v) => *v >= T::one(),
            Odds::Infinite => true,
        }
    }

    /// `R == 1` under the mode's tie policy.
    pub fn is_one(&self) -> bool {
        match self {
            Odds::Finite(v) => v.tie_eq(&T::one()),
            Odds::Infinite => false,
        }
    }

    fn plus(&self, other: &Odds<T>) -> Odds<T> {
        match (self, other) {
            (Odds::Finite(a), Odds::Finite(b)) => Odds::Finite(a.clone() + b.clone()),
            _ => Odds::Infinite,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Odds::Finite(v) => v.to_f64(),
            Odds::Infinite => f64::INFINITY,
        }
    }

    /// JSON value: the mode's number representation, or the string `"inf"`.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Odds::Finite(v) => v.to_json(),
            Odds::Infinite => serde_json::Value::String("inf".into()),
        }
    }
}

impl<T: fmt::Display> fmt::Display for Odds<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Odds::Finite(v) => v.fmt(f),
            Odds::Infinite => f.write_str("inf"),
        }
    }
}

/// Success probabilities `p_1..p_n` for one horizon `n >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct OddsProblem<T> {
    p: Vec<T>,
}

/// Validates and wraps a probability sequence.
pub fn build_problem<T: Scalar>(p: Vec<T>) -> Result<OddsProblem<T>, ProblemError> {
    OddsProblem::new(p)
}

impl<T: Scalar> OddsProblem<T> {
    pub fn new(p: Vec<T>) -> Result<Self, ProblemError> {
        if p.is_empty() {
            return Err(ProblemError::EmptySequence);
        }
        if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !v.is_probability()) {
            return Err(ProblemError::ProbabilityOutOfRange {
                index: i + 1,
                value: v.to_f64(),
            });
        }
        Ok(Self { p })
    }

    /// Horizon `n`.
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mode(&self) -> ArithmeticMode {
        T::MODE
    }

    pub fn probabilities(&self) -> &[T] {
        &self.p
    }

    pub fn into_probabilities(self) -> Vec<T> {
        self.p
    }

    /// `p_k` for `1 <= k <= n`.
    pub fn p(&self, k: usize) -> &T {
        &self.p[k - 1]
    }

    /// `q_k = 1 - p_k`.
    pub fn q(&self, k: usize) -> T {
        T::one() - self.p[k - 1].clone()
    }

    /// `r_k = p_k / q_k`, infinite when `p_k = 1`.
    pub fn odds(&self, k: usize) -> Odds<T> {
        let q = self.q(k);
        if q.is_zero() {
            Odds::Infinite
        } else {
            Odds::Finite(self.p[k - 1].clone() / q)
        }
    }

    /// Largest index with `p_k = 1`.
    pub fn last_certain(&self) -> Option<usize> {
        self.p.iter().rposition(|v| v.is_one()).map(|i| i + 1)
    }

    fn check_index(&self, k: usize) -> Result<(), ProblemError> {
        if k == 0 || k > self.len() {
            Err(ProblemError::IndexOutOfRange { index: k, n: self.len() })
        } else {
            Ok(())
        }
    }

    /// Removes `p_k`; later entries shift down by one.
    pub fn delete_index(&self, k: usize) -> Result<Self, ProblemError> {
        self.check_index(k)?;
        let mut p = self.p.clone();
        p.remove(k - 1);
        Self::new(p)
    }

    pub fn suffix_tables(&self) -> SuffixTables<T> {
        SuffixTables::new(self)
    }

    pub fn solve(&self) -> ThresholdSolution<T> {
        self.suffix_tables().solve()
    }

    /// Win probability of the threshold rule that starts at `k`.
    pub fn threshold_value(&self, k: usize) -> Result<T, ProblemError> {
        self.check_index(k)?;
        Ok(self.suffix_tables().threshold_value(self, k))
    }

    /// `[f(1,n), ..., f(n,n)]` with `f(k,n)` the value of threshold `k`.
    pub fn unimodal_profile(&self) -> Vec<T> {
        let tables = self.suffix_tables();
        (1..=self.len()).map(|k| tables.threshold_value(self, k)).collect()
    }
}

/// Tail products `Q(k,n)` and tail odds sums `R(k,n)` for `k = 1..=n+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffixTables<T> {
    q: Vec<T>,
    r: Vec<Odds<T>>,
    last_certain: Option<usize>,
}

impl<T: Scalar> SuffixTables<T> {
    /// One backward pass from the empty tail `Q = 1`, `R = 0`.
    pub fn new(problem: &OddsProblem<T>) -> Self {
        let n = problem.len();
        let mut q = vec![T::one(); n + 1];
        let mut r = vec![Odds::Finite(T::zero()); n + 1];
        for k in (1..=n).rev() {
            q[k - 1] = problem.q(k) * q[k].clone();
            r[k - 1] = problem.odds(k).plus(&r[k]);
        }
        Self { q, r, last_certain: problem.last_certain() }
    }

    pub fn horizon(&self) -> usize {
        self.q.len() - 1
    }

    /// `Q(k,n)` for `1 <= k <= n+1`.
    pub fn q(&self, k: usize) -> &T {
        &self.q[k - 1]
    }

    /// `R(k,n)` for `1 <= k <= n+1`.
    pub fn r(&self, k: usize) -> &Odds<T> {
        &self.r[k - 1]
    }

    /// Whether `Q(k,n) = 0`, decided structurally (some `p_j = 1`, `j >= k`)
    /// so that float underflow is never mistaken for a certain success.
    pub fn has_certain_from(&self, k: usize) -> bool {
        self.last_certain.is_some_and(|l| l >= k)
    }

    /// Largest `k` with `R(k,n) >= 1`, or 1 if there is none.
    pub fn threshold(&self) -> usize {
        (1..=self.horizon()).rev().find(|&k| self.r(k).at_least_one()).unwrap_or(1)
    }

    pub fn solve(&self) -> ThresholdSolution<T> {
        let s = self.threshold();
        let degenerate = self.has_certain_from(s);
        let value = if degenerate {
            // s is then the last certain index and Q(s,n) R(s,n) reduces to Q(s+1,n).
            self.q(s + 1).clone()
        } else {
            self.product(s)
        };
        ThresholdSolution {
            threshold: s,
            value,
            dual_threshold: s >= 2 && self.r(s).is_one(),
            degenerate,
        }
    }

    /// `Q(k,n) R(k,n)` for a tail without certain successes.
    fn product(&self, k: usize) -> T {
        match self.r(k) {
            Odds::Finite(r) => self.q(k).clone() * r.clone(),
            Odds::Infinite => unreachable!("finite tail expected at {k}"),
        }
    }

    fn threshold_value(&self, problem: &OddsProblem<T>, k: usize) -> T {
        match self.last_certain {
            Some(l) if l == k => self.q(k + 1).clone(),
            // The rule stops at the certain index l at the latest.
            Some(l) if l > k => oracle::stopset_value(problem, &StopSet::threshold(problem.len(), k))
                .expect("threshold stop-set is valid"),
            _ => self.product(k),
        }
    }
}

/// Optimal threshold `s(n)` and value `V(n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSolution<T> {
    pub threshold: usize,
    pub value: T,
    /// `R(s,n) = 1`: threshold `s - 1` is optimal too.
    pub dual_threshold: bool,
    /// `Q(s,n) = 0`: the value was reduced to `Q(s+1,n)`.
    pub degenerate: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use num_traits::{One, Zero};

    fn rat(text: &str) -> Rational {
        crate::scalar::parse_rational(text).unwrap()
    }

    fn game5() -> OddsProblem<f64> {
        OddsProblem::new(vec![0.1, 0.2, 0.24, 0.25, 0.251]).unwrap()
    }

    #[test]
    fn build_accepts_valid_and_rejects_invalid() {
        assert_eq!(OddsProblem::new(vec![0.5]).unwrap().len(), 1);
        assert_eq!(game5().len(), 5);
        assert_eq!(
            OddsProblem::new(vec![0.5, 1.3]),
            Err(ProblemError::ProbabilityOutOfRange { index: 2, value: 1.3 })
        );
        assert_eq!(OddsProblem::<f64>::new(vec![]), Err(ProblemError::EmptySequence));
        assert!(matches!(
            OddsProblem::new(vec![-0.1]),
            Err(ProblemError::ProbabilityOutOfRange { index: 1, .. })
        ));
        assert!(OddsProblem::new(vec![f64::NAN]).is_err());
        assert!(build_problem(vec![rat("4/3")]).is_err());
        assert_eq!(game5().mode(), ArithmeticMode::FloatingPoint);
    }

    #[test]
    fn suffix_tables_single_entry() {
        let t = OddsProblem::new(vec![0.5]).unwrap().suffix_tables();
        assert_eq!(*t.q(1), 0.5);
        assert_eq!(*t.q(2), 1.0);
        assert_eq!(t.r(1), &Odds::Finite(1.0));
        assert_eq!(t.r(2), &Odds::Finite(0.0));
    }

    #[test]
    fn suffix_tables_game5() {
        let t = game5().suffix_tables();
        assert!((t.q(2) - 0.341544).abs() < 1e-12);
        assert!((t.r(2).to_f64() - 1.2342362916637388).abs() < 1e-12);
    }

    #[test]
    fn suffix_tables_with_certain_entry() {
        let t = OddsProblem::new(vec![0.3, 1.0, 0.2]).unwrap().suffix_tables();
        assert_eq!(*t.q(2), 0.0);
        assert!(t.r(2).is_infinite());
        assert!(t.r(1).is_infinite());
        assert!((t.q(3) - 0.8).abs() < 1e-15);
        assert!((t.r(3).to_f64() - 0.25).abs() < 1e-15);
        assert!(t.has_certain_from(1) && t.has_certain_from(2) && !t.has_certain_from(3));
    }

    #[test]
    fn solve_game5_and_game4() {
        let s = game5().solve();
        assert_eq!(s.threshold, 2);
        assert!((s.value - 0.421546).abs() < 1e-12);
        assert!(!s.dual_threshold && !s.degenerate);

        let s4 = OddsProblem::new(vec![0.1, 0.2, 0.24, 0.25]).unwrap().solve();
        assert_eq!(s4.threshold, 1);
        assert!((s4.value - 0.4146).abs() < 1e-12);
    }

    #[test]
    fn solve_single_certain_index() {
        let s = OddsProblem::new(vec![1.0]).unwrap().solve();
        assert_eq!(s.threshold, 1);
        assert_eq!(s.value, 1.0);
        assert!(s.degenerate);
    }

    #[test]
    fn solve_degenerate_branch_exact() {
        let p = OddsProblem::new(vec![rat("3/10"), Rational::one(), rat("1/5")]).unwrap();
        let s = p.solve();
        assert_eq!(s.threshold, 2);
        assert!(s.degenerate);
        assert_eq!(s.value, rat("4/5"));
        assert_eq!(s.value, oracle::dp_value(&p).value);
    }

    #[test]
    fn dual_threshold_flag() {
        let s = OddsProblem::new(vec![0.5, 0.5]).unwrap().solve();
        assert_eq!(s.threshold, 2);
        assert!(s.dual_threshold);
        // R(1,1) = 1 but there is no threshold 0.
        let s = OddsProblem::new(vec![0.5]).unwrap().solve();
        assert!(!s.dual_threshold);
    }

    #[test]
    fn zero_probabilities_are_legal() {
        let s = OddsProblem::new(vec![0.0, 0.5, 0.0]).unwrap().solve();
        assert_eq!(s.threshold, 2);
        assert_eq!(s.value, 0.5);
        let s = OddsProblem::new(vec![0.0]).unwrap().solve();
        assert_eq!((s.threshold, s.value), (1, 0.0));
    }

    #[test]
    fn threshold_values() {
        let p = OddsProblem::new(vec![0.5]).unwrap();
        assert_eq!(p.threshold_value(1).unwrap(), 0.5);
        let g = game5();
        assert!((g.threshold_value(2).unwrap() - 0.421546).abs() < 1e-12);
        assert!((g.threshold_value(5).unwrap() - 0.251).abs() < 1e-15);
        assert_eq!(
            g.threshold_value(6),
            Err(ProblemError::IndexOutOfRange { index: 6, n: 5 })
        );
        assert!(g.threshold_value(0).is_err());
    }

    #[test]
    fn threshold_value_before_a_certain_index() {
        // Starting at 1 stops at the first success among {1, 2}; index 2 is certain.
        let p = OddsProblem::new(vec![rat("3/10"), Rational::one(), rat("1/5")]).unwrap();
        // win only if I_1 = 0 and then I_3 = 0 after stopping at 2: 7/10 * 4/5
        assert_eq!(p.threshold_value(1).unwrap(), rat("14/25"));
        assert_eq!(p.threshold_value(2).unwrap(), rat("4/5"));
        assert_eq!(p.threshold_value(3).unwrap(), rat("1/5"));
    }

    #[test]
    fn unimodal_profiles() {
        assert_eq!(OddsProblem::new(vec![0.5, 0.5]).unwrap().unimodal_profile(), vec![0.5, 0.5]);
        assert_eq!(OddsProblem::new(vec![0.9]).unwrap().unimodal_profile(), vec![0.9]);
        let f = game5().unimodal_profile();
        let argmax = (0..f.len()).max_by(|&a, &b| f[a].partial_cmp(&f[b]).unwrap()).unwrap();
        assert_eq!(argmax + 1, 2);
    }

    #[test]
    fn secretary_three_is_exactly_one_half() {
        let p = OddsProblem::new(vec![Rational::one(), rat("1/2"), rat("1/3")]).unwrap();
        let t = p.suffix_tables();
        let v = t.q(2).clone() * t.r(2).finite().unwrap().clone();
        assert_eq!(v, rat("1/2"));
        assert_eq!(p.solve().value, rat("1/2"));
    }

    #[test]
    fn delete_index_shifts_entries() {
        let p = OddsProblem::new(vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(p.delete_index(2).unwrap().probabilities(), &[0.1, 0.3]);
        assert!(p.delete_index(4).is_err());
        assert_eq!(
            OddsProblem::new(vec![0.5]).unwrap().delete_index(1),
            Err(ProblemError::EmptySequence)
        );
    }

    #[test]
    fn odds_helpers() {
        let o: Odds<Rational> = Odds::Finite(Rational::one());
        assert!(o.is_one() && o.at_least_one());
        assert!(!Odds::<f64>::Infinite.is_one());
        assert!(Odds::<f64>::Infinite.at_least_one());
        assert!(Odds::Finite(Rational::zero()).finite().is_some());
        assert_eq!(Odds::<f64>::Infinite.to_string(), "inf");
    }
}
