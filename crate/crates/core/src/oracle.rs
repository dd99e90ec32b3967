//! Brute-force optimality certificates that never form odds sums.
//!
//! Two independent routes to the optimal win probability:
//!
//! * [`dp_value`]: backward induction over "about to observe index k+1". On a
//!   success at `k` stopping wins with probability `Q(k+1,n)` (no later
//!   success), and `C[k]` is the value of passing `k` and playing on optimally.
//! * [`enumerate_stopsets`]: evaluate every subset `S` of indices under the
//!   rule "stop at the first success inside `S`" and keep the best.
//!
//! Every non-anticipative strategy for independent indicators is dominated by
//! some stop-set rule, so both routes give the true optimum.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::odds::OddsProblem;
use crate::scalar::Scalar;

/// Largest horizon [`enumerate_stopsets`] accepts by default.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// Hard ceiling regardless of the configured cap (subset masks are `u64`).
const MAX_ENUMERATION_HORIZON: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("stop-set index {index} is outside 1..={n}")]
    InvalidStopSet { index: usize, n: usize },
    #[error("horizon {n} exceeds the enumeration cap {cap}")]
    HorizonTooLarge { n: usize, cap: usize },
}

/// Indices at which a strategy stops on a success; sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct StopSet {
    n: usize,
    indices: Vec<usize>,
}

impl StopSet {
    pub fn new(n: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self, OracleError> {
        let mut indices: Vec<usize> = indices.into_iter().collect();
        if let Some(&bad) = indices.iter().find(|&&k| k == 0 || k > n) {
            return Err(OracleError::InvalidStopSet { index: bad, n });
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(Self { n, indices })
    }

    pub fn empty(n: usize) -> Self {
        Self { n, indices: Vec::new() }
    }

    /// `{s, s+1, ..., n}`.
    pub fn threshold(n: usize, s: usize) -> Self {
        Self { n, indices: (s.max(1)..=n).collect() }
    }

    fn from_mask(n: usize, mask: u64) -> Self {
        Self { n, indices: (1..=n).filter(|k| mask >> (k - 1) & 1 == 1).collect() }
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    /// The threshold `s` if the set is `{s..n}` (non-empty).
    pub fn as_threshold(&self) -> Option<usize> {
        let &first = self.indices.first()?;
        (self.indices.len() == self.n + 1 - first).then_some(first)
    }
}

/// Tail products of `q_j` computed locally: `out[k] = Q(k+1, n)` for `k = 0..=n`.
fn no_later_success<T: Scalar>(problem: &OddsProblem<T>) -> Vec<T> {
    let n = problem.len();
    let mut out = vec![T::one(); n + 1];
    for k in (0..n).rev() {
        out[k] = out[k + 1].clone() * problem.q(k + 1);
    }
    out
}

/// Win probability of stopping at the first success inside `set`:
/// `sum_{k in S} (prod_{j in S, j < k} q_j) p_k Q(k+1,n)`.
pub fn stopset_value<T: Scalar>(problem: &OddsProblem<T>, set: &StopSet) -> Result<T, OracleError> {
    let n = problem.len();
    if let Some(&bad) = set.indices.iter().find(|&&k| k > n) {
        return Err(OracleError::InvalidStopSet { index: bad, n });
    }
    let tail = no_later_success(problem);
    let mut reach = T::one();
    let mut total = T::zero();
    for &k in &set.indices {
        total = total + reach.clone() * problem.p(k).clone() * tail[k].clone();
        reach = reach * problem.q(k);
    }
    Ok(total)
}

/// Backward-induction solution over all non-anticipative strategies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpResult<T> {
    pub value: T,
    /// `stop[k-1]`: stop at index `k` when it is a success.
    pub stop: Vec<bool>,
    /// `continuation[k]` for `k = 0..=n`: value of passing index `k` (or of
    /// starting, for `k = 0`) and playing optimally afterwards.
    pub continuation: Vec<T>,
}

impl<T> DpResult<T> {
    /// Indices where the rule stops on a success.
    pub fn stop_indices(&self) -> Vec<usize> {
        self.stop.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i + 1).collect()
    }
}

pub fn dp_value<T: Scalar>(problem: &OddsProblem<T>) -> DpResult<T> {
    let n = problem.len();
    let tail = no_later_success(problem);
    let mut continuation = vec![T::zero(); n + 1];
    for k in (0..n).rev() {
        let next = continuation[k + 1].clone();
        let on_success = if tail[k + 1] >= next { tail[k + 1].clone() } else { next.clone() };
        continuation[k] = problem.p(k + 1).clone() * on_success + problem.q(k + 1) * next;
    }
    // Ties break toward stopping.
    let stop = (1..=n).map(|k| tail[k] >= continuation[k]).collect();
    DpResult { value: continuation[0].clone(), stop, continuation }
}

/// Result of exhaustive stop-set enumeration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Enumeration<T> {
    /// Lexicographically smallest maximizing set.
    pub best: StopSet,
    pub value: T,
    /// Largest `s` whose threshold set `{s..n}` attains the maximum.
    pub threshold_maximizer: Option<usize>,
    /// Number of subsets attaining the maximum (ties under the mode's policy).
    pub maximizers: usize,
}

/// Lexicographic order of the sorted index lists encoded by two masks.
fn lex_cmp(a: u64, b: u64) -> Ordering {
    let (mut a, mut b) = (a, b);
    loop {
        match (a == 0, b == 0) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        let (ia, ib) = (a.trailing_zeros(), b.trailing_zeros());
        if ia != ib {
            return ia.cmp(&ib);
        }
        a &= a - 1;
        b &= b - 1;
    }
}

fn mask_value<T: Scalar>(problem: &OddsProblem<T>, tail: &[T], mask: u64) -> T {
    let mut reach = T::one();
    let mut total = T::zero();
    let mut bits = mask;
    while bits != 0 {
        let k = bits.trailing_zeros() as usize + 1;
        total = total + reach.clone() * problem.p(k).clone() * tail[k].clone();
        reach = reach * problem.q(k);
        bits &= bits - 1;
    }
    total
}

/// Maximizes [`stopset_value`] over all `2^n` subsets. Work is sharded over
/// the current rayon pool; the result does not depend on the sharding.
pub fn enumerate_stopsets<T: Scalar>(
    problem: &OddsProblem<T>,
    cap: usize,
) -> Result<Enumeration<T>, OracleError> {
    let n = problem.len();
    if n > cap || n > MAX_ENUMERATION_HORIZON {
        return Err(OracleError::HorizonTooLarge { n, cap: cap.min(MAX_ENUMERATION_HORIZON) });
    }
    let tail = no_later_success(problem);
    let count = 1u64 << n;
    let pick = |a: (u64, T), b: (u64, T)| if b.1 > a.1 { b } else { a };
    let (_, max) = (0..count)
        .into_par_iter()
        .map(|m| (m, mask_value(problem, &tail, m)))
        .reduce(|| (0, T::zero()), pick);

    // Second pass: all masks tied with the maximum, keep the lexicographically smallest.
    let (best, maximizers) = (0..count)
        .into_par_iter()
        .filter(|&m| mask_value(problem, &tail, m).tie_eq(&max))
        .map(|m| (m, 1usize))
        .reduce(
            || (u64::MAX, 0),
            |a, b| {
                let keep = if a.1 == 0 {
                    b.0
                } else if b.1 == 0 || lex_cmp(a.0, b.0) != Ordering::Greater {
                    a.0
                } else {
                    b.0
                };
                (keep, a.1 + b.1)
            },
        );
    let best = StopSet::from_mask(n, best);
    let value = mask_value(problem, &tail, best.indices.iter().fold(0u64, |m, k| m | 1 << (k - 1)));
    let threshold_maximizer = (1..=n).rev().find(|&s| {
        let mask = (count - 1) & !((1u64 << (s - 1)) - 1);
        mask_value(problem, &tail, mask).tie_eq(&max)
    });
    Ok(Enumeration { best, value, threshold_maximizer, maximizers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{parse_rational, Rational};
    use num_traits::One;

    fn game5() -> OddsProblem<f64> {
        OddsProblem::new(vec![0.1, 0.2, 0.24, 0.25, 0.251]).unwrap()
    }

    #[test]
    fn stopset_construction() {
        let s = StopSet::new(4, [3, 1, 3]).unwrap();
        assert_eq!(s.indices(), &[1, 3]);
        assert!(s.contains(3) && !s.contains(2));
        assert_eq!(StopSet::new(3, [4]), Err(OracleError::InvalidStopSet { index: 4, n: 3 }));
        assert!(StopSet::new(3, [0]).is_err());
        assert_eq!(StopSet::threshold(5, 2).indices(), &[2, 3, 4, 5]);
        assert_eq!(StopSet::threshold(5, 2).as_threshold(), Some(2));
        assert_eq!(StopSet::new(5, [2, 4]).unwrap().as_threshold(), None);
        assert_eq!(StopSet::empty(3).as_threshold(), None);
    }

    #[test]
    fn stopset_values() {
        let g = game5();
        let v = stopset_value(&g, &StopSet::threshold(5, 2)).unwrap();
        assert!((v - 0.421546).abs() < 1e-12);
        assert_eq!(stopset_value(&g, &StopSet::empty(5)).unwrap(), 0.0);
        assert!((stopset_value(&g, &StopSet::new(5, [5]).unwrap()).unwrap() - 0.251).abs() < 1e-15);
        let wrong = StopSet::new(6, [6]).unwrap();
        assert_eq!(stopset_value(&g, &wrong), Err(OracleError::InvalidStopSet { index: 6, n: 5 }));
    }

    #[test]
    fn dp_single_step() {
        let d = dp_value(&OddsProblem::new(vec![0.5]).unwrap());
        assert_eq!(d.value, 0.5);
        assert_eq!(d.stop, vec![true]);
        assert_eq!(d.continuation, vec![0.5, 0.0]);
    }

    #[test]
    fn dp_game5_stops_from_two() {
        let d = dp_value(&game5());
        assert!((d.value - 0.421546).abs() < 1e-12);
        assert_eq!(d.stop_indices(), vec![2, 3, 4, 5]);
    }

    #[test]
    fn dp_degenerate_case_by_hand() {
        // C[3]=0; C[2]=p3*max(1,0)=1/5; C[1]=1*max(Q(3,3)=4/5, 1/5)=4/5; C[0]=3/10*max(0,4/5)+7/10*4/5=4/5
        let p = OddsProblem::new(vec![
            parse_rational("3/10").unwrap(),
            Rational::one(),
            parse_rational("1/5").unwrap(),
        ])
        .unwrap();
        let d = dp_value(&p);
        assert_eq!(d.value, parse_rational("4/5").unwrap());
        assert_eq!(d.continuation[2], parse_rational("1/5").unwrap());
        assert_eq!(d.stop, vec![false, true, true]);
    }

    #[test]
    fn enumerate_two_halves() {
        let e = enumerate_stopsets(&OddsProblem::new(vec![0.5, 0.5]).unwrap(), DEFAULT_ENUMERATION_CAP)
            .unwrap();
        assert_eq!(e.value, 0.5);
        assert_eq!(e.maximizers, 2);
        assert_eq!(e.best.indices(), &[1, 2]);
        assert_eq!(e.threshold_maximizer, Some(2));
    }

    #[test]
    fn enumerate_game5_and_single() {
        let e = enumerate_stopsets(&game5(), DEFAULT_ENUMERATION_CAP).unwrap();
        assert!((e.value - 0.421546).abs() < 1e-12);
        assert_eq!(e.best.indices(), &[2, 3, 4, 5]);
        assert_eq!(e.threshold_maximizer, Some(2));

        let e = enumerate_stopsets(&OddsProblem::new(vec![0.9]).unwrap(), 20).unwrap();
        assert_eq!((e.value, e.best.indices().to_vec()), (0.9, vec![1]));
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let p = OddsProblem::new(vec![0.1; 5]).unwrap();
        assert_eq!(enumerate_stopsets(&p, 4), Err(OracleError::HorizonTooLarge { n: 5, cap: 4 }));
    }

    #[test]
    fn lex_order_of_masks() {
        // {1,2} < {2} < {2,3} < {3}
        assert_eq!(lex_cmp(0b011, 0b010), Ordering::Less);
        assert_eq!(lex_cmp(0b010, 0b110), Ordering::Less);
        assert_eq!(lex_cmp(0b110, 0b100), Ordering::Less);
        assert_eq!(lex_cmp(0, 0b1), Ordering::Less);
        assert_eq!(lex_cmp(0b101, 0b101), Ordering::Equal);
    }

    #[test]
    fn enumeration_is_independent_of_pool_size() {
        let p = OddsProblem::new(vec![0.3, 0.1, 0.5, 0.5, 0.2, 0.6, 0.05, 0.4, 0.5, 0.1]).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| enumerate_stopsets(&p, 20).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
