//! Families of n-problems over one underlying sequence `p_1, p_2, ...`.
//!
//! The n-problem truncates the sequence to its first `n` entries. This module
//! sweeps the horizon, locates `N*` (the last horizon with `R(1,n) <= 1`),
//! classifies how `V(n)` moves with `n`, and detects coincidences
//! `V(n+1) = V(n)` together with the structural reason behind them.
//!
//! For a non-increasing sequence strictly inside `(0,1)` a coincidence occurs
//! exactly when
//!
//! * (a) `R(s(n),n) = 1` or `R(s(n+1),n) = 1`, or
//! * (b) `p_{s(n)} = p_{n+1}`.
//!
//! Outside that setting values are compared directly.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::odds::{OddsProblem, ProblemError, SuffixTables, ThresholdSolution};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyError {
    #[error("generator has no entry at index {index}")]
    GeneratorExhausted { index: usize },
    #[error("generated probability at index {index} is out of range [0, 1]: {value}")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("declared {declared} monotonicity fails between indices {index} and {}", index + 1)]
    MonotonicityViolated { declared: Monotonicity, index: usize },
    #[error("invalid horizon range {n_min}..={n_max}")]
    InvalidRange { n_min: usize, n_max: usize },
    #[error("index {index} is out of range")]
    IndexOutOfRange { index: usize },
    #[error("precondition not met: {0}")]
    PreconditionNotMet(String),
    #[error("result at n = {n} contradicts the monotonicity theory: {detail}")]
    InconsistentWithTheorem { n: usize, detail: String },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monotonicity {
    NonIncreasing,
    NonDecreasing,
}

impl fmt::Display for Monotonicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Monotonicity::NonIncreasing => "non-increasing",
            Monotonicity::NonDecreasing => "non-decreasing",
        })
    }
}

type RuleFn<T> = Arc<dyn Fn(usize) -> Option<T> + Send + Sync>;

/// Rule producing `p_k` for `k = 1, 2, ...`.
#[derive(Clone)]
pub enum Generator<T> {
    /// Finite list; indices past the end are unavailable.
    Explicit(Vec<T>),
    Constant(T),
    /// `p_k = 1/k`.
    Secretary,
    /// `p_k = m_k / M_k` for the given group sizes (finite).
    GroupInterview(Vec<u64>),
    /// Arbitrary rule; `None` marks an unavailable index.
    Rule(RuleFn<T>),
    /// `base` with the 1-based `index` removed.
    Deleted { base: Box<Generator<T>>, index: usize },
}

impl<T: fmt::Debug> fmt::Debug for Generator<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Explicit(p) => f.debug_tuple("Explicit").field(p).finish(),
            Generator::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            Generator::Secretary => f.write_str("Secretary"),
            Generator::GroupInterview(m) => f.debug_tuple("GroupInterview").field(m).finish(),
            Generator::Rule(_) => f.write_str("Rule(..)"),
            Generator::Deleted { base, index } => {
                f.debug_struct("Deleted").field("base", base).field("index", index).finish()
            }
        }
    }
}

impl<T: Scalar> Generator<T> {
    fn get(&self, k: usize) -> Option<T> {
        match self {
            Generator::Explicit(p) => p.get(k.checked_sub(1)?).cloned(),
            Generator::Constant(v) => Some(v.clone()),
            Generator::Secretary => Some(T::from_ratio(1, k as u64)),
            Generator::GroupInterview(sizes) => {
                let m = *sizes.get(k.checked_sub(1)?)?;
                let total: u64 = sizes[..k].iter().sum();
                (total > 0).then(|| T::from_ratio(m, total))
            }
            Generator::Rule(f) => f(k),
            Generator::Deleted { base, index } => base.get(if k < *index { k } else { k + 1 }),
        }
    }
}

/// An underlying sequence with an optional monotonicity assertion, checked
/// lazily on every queried prefix.
#[derive(Debug, Clone)]
pub struct UnderlyingSequence<T> {
    pub generator: Generator<T>,
    pub declared: Option<Monotonicity>,
}

impl<T: Scalar> UnderlyingSequence<T> {
    pub fn new(generator: Generator<T>) -> Self {
        Self { generator, declared: None }
    }

    pub fn explicit(p: Vec<T>) -> Self {
        Self::new(Generator::Explicit(p))
    }

    pub fn constant(value: T) -> Self {
        Self::new(Generator::Constant(value)).declare(Monotonicity::NonIncreasing)
    }

    pub fn secretary() -> Self {
        Self::new(Generator::Secretary).declare(Monotonicity::NonIncreasing)
    }

    pub fn group_interview(sizes: Vec<u64>) -> Self {
        Self::new(Generator::GroupInterview(sizes))
    }

    pub fn rule(f: impl Fn(usize) -> Option<T> + Send + Sync + 'static) -> Self {
        Self::new(Generator::Rule(Arc::new(f)))
    }

    pub fn declare(mut self, monotonicity: Monotonicity) -> Self {
        self.declared = Some(monotonicity);
        self
    }

    /// `p_k`, validated to lie in `[0,1]`.
    pub fn get(&self, k: usize) -> Result<T, FamilyError> {
        let v = self.generator.get(k).ok_or(FamilyError::GeneratorExhausted { index: k })?;
        if !v.is_probability() {
            return Err(FamilyError::ProbabilityOutOfRange { index: k, value: v.to_f64() });
        }
        Ok(v)
    }

    /// `p_1..p_n`, checked against the declared monotonicity.
    pub fn prefix(&self, n: usize) -> Result<Vec<T>, FamilyError> {
        let p: Vec<T> = (1..=n).map(|k| self.get(k)).collect::<Result<_, _>>()?;
        if let Some(declared) = self.declared {
            if let Some(i) = first_violation(&p, declared) {
                return Err(FamilyError::MonotonicityViolated { declared, index: i + 1 });
            }
        }
        Ok(p)
    }

    pub fn problem(&self, n: usize) -> Result<OddsProblem<T>, FamilyError> {
        Ok(OddsProblem::new(self.prefix(n)?)?)
    }

    /// Removes index `k`; later entries shift down. Monotonicity survives.
    pub fn delete_index(&self, k: usize) -> Result<Self, FamilyError> {
        if k == 0 {
            return Err(FamilyError::IndexOutOfRange { index: k });
        }
        self.generator.get(k).ok_or(FamilyError::IndexOutOfRange { index: k })?;
        Ok(Self {
            generator: Generator::Deleted { base: Box::new(self.generator.clone()), index: k },
            declared: self.declared,
        })
    }
}

/// Index `i` (0-based) of the first pair `(p[i], p[i+1])` breaking `m`.
fn first_violation<T: Scalar>(p: &[T], m: Monotonicity) -> Option<usize> {
    p.windows(2).position(|w| match m {
        Monotonicity::NonIncreasing => w[1] > w[0],
        Monotonicity::NonDecreasing => w[1] < w[0],
    })
}

fn is_monotone<T: Scalar>(p: &[T], m: Monotonicity) -> bool {
    first_violation(p, m).is_none()
}

/// `N*`, or [`NStar::BeyondRange`] if `R(1,n) <= 1` still holds at the cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NStar {
    /// Largest horizon with `R(1,n) <= 1`; 0 when already `R(1,1) > 1`.
    At(usize),
    BeyondRange,
}

impl NStar {
    /// Horizons at or beyond which the theory's "n >= N*" statements apply.
    pub fn start(self) -> Option<usize> {
        match self {
            NStar::At(n) => Some(n.max(1)),
            NStar::BeyondRange => None,
        }
    }
}

impl fmt::Display for NStar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NStar::At(n) => write!(f, "{n}"),
            NStar::BeyondRange => f.write_str("beyond range"),
        }
    }
}

fn n_star_of_prefix<T: Scalar>(p: &[T]) -> NStar {
    let mut sum = T::zero();
    for (i, v) in p.iter().enumerate() {
        let q = T::one() - v.clone();
        if q.is_zero() {
            return NStar::At(i);
        }
        sum = sum + v.clone() / q;
        if sum > T::one() {
            return NStar::At(i);
        }
    }
    NStar::BeyondRange
}

/// First horizon with `R(1,n) >= 1`: `N*` itself when `R(1,N*) = 1`,
/// otherwise `N* + 1`. From here on `R(s(n),n) >= 1`, which is what the
/// "beyond N*" monotonicity and coincidence results actually use; at
/// `n = N*` with `R(1,N*) < 1` they fail (constant `p = 3/10`:
/// `V(2) = 21/50 < V(3) = 441/1000`).
fn settled_of_prefix<T: Scalar>(p: &[T]) -> Option<usize> {
    let mut sum = T::zero();
    for (i, v) in p.iter().enumerate() {
        let q = T::one() - v.clone();
        if q.is_zero() {
            return Some(i + 1);
        }
        sum = sum + v.clone() / q;
        if sum >= T::one() || sum.tie_eq(&T::one()) {
            return Some(i + 1);
        }
    }
    None
}

/// Largest `n <= n_max` with `R(1,n) <= 1`.
pub fn n_star<T: Scalar>(seq: &UnderlyingSequence<T>, n_max: usize) -> Result<NStar, FamilyError> {
    if n_max == 0 {
        return Err(FamilyError::InvalidRange { n_min: 1, n_max });
    }
    Ok(n_star_of_prefix(&seq.prefix(n_max)?))
}

/// Observed behavior of `V(n)` over a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonotonicityClass {
    /// Non-increasing from `N*` on (constant families land here).
    NonIncreasingBeyondNStar,
    NonDecreasingEverywhere,
    Mixed,
}

impl fmt::Display for MonotonicityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MonotonicityClass::NonIncreasingBeyondNStar => "non-increasing-beyond-N*",
            MonotonicityClass::NonDecreasingEverywhere => "non-decreasing-everywhere",
            MonotonicityClass::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoincidenceReason {
    /// `R(s(n),n) = 1`.
    DualThreshold,
    /// `R(s(n+1),n) = 1`.
    TailOddsOne,
    /// `p_{s(n)} = p_{n+1}`.
    EqualEndpoints,
    /// Found by comparing values, theory not applicable.
    Direct,
}

/// `V(n+1) = V(n)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Coincidence {
    pub n: usize,
    pub reasons: Vec<CoincidenceReason>,
}

impl Coincidence {
    pub fn has(&self, reason: CoincidenceReason) -> bool {
        self.reasons.contains(&reason)
    }
}

/// Optimal thresholds and values over a horizon range.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyReport<T> {
    pub n_min: usize,
    pub n_max: usize,
    /// `values[i]` is `V(n_min + i)`.
    pub values: Vec<T>,
    pub thresholds: Vec<usize>,
    pub degenerate: Vec<bool>,
    pub n_star: NStar,
    /// First horizon with `R(1,n) >= 1`, if within the sweep limit.
    pub settled_from: Option<usize>,
    pub monotonicity: MonotonicityClass,
    /// Direct value coincidences `V(n+1) = V(n)` with both horizons in range.
    pub coincidences: Vec<Coincidence>,
    /// Horizons with `R(s(n),n) = 1`.
    pub dual_thresholds: Vec<usize>,
}

impl<T: Scalar> FamilyReport<T> {
    pub fn horizons(&self) -> std::ops::RangeInclusive<usize> {
        self.n_min..=self.n_max
    }

    pub fn value(&self, n: usize) -> &T {
        &self.values[n - self.n_min]
    }

    pub fn threshold(&self, n: usize) -> usize {
        self.thresholds[n - self.n_min]
    }
}

fn check_range(n_min: usize, n_max: usize) -> Result<(), FamilyError> {
    if n_min == 0 || n_min > n_max {
        Err(FamilyError::InvalidRange { n_min, n_max })
    } else {
        Ok(())
    }
}

/// Solves every horizon in `lo..=hi` from a shared prefix. Horizons are
/// distributed over the current rayon pool and collected in order.
fn solve_horizons<T: Scalar>(p: &[T], lo: usize, hi: usize) -> Result<Vec<SuffixTables<T>>, FamilyError> {
    (lo..=hi)
        .into_par_iter()
        .map(|n| Ok(OddsProblem::new(p[..n].to_vec())?.suffix_tables()))
        .collect()
}

/// `V(n+1) <= V(n)` for every consecutive pair.
fn non_increasing<T: Scalar>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[1].tie_le(&w[0]))
}

fn non_decreasing<T: Scalar>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[0].tie_le(&w[1]))
}

fn observed_class<T: Scalar>(report_values: &[T], n_min: usize, settled: Option<usize>) -> MonotonicityClass {
    let tail_ok = match settled {
        Some(start) => non_increasing(&report_values[start.saturating_sub(n_min).min(report_values.len())..]),
        None => false,
    };
    if tail_ok {
        MonotonicityClass::NonIncreasingBeyondNStar
    } else if non_decreasing(report_values) {
        MonotonicityClass::NonDecreasingEverywhere
    } else {
        MonotonicityClass::Mixed
    }
}

/// Solves the n-problems for `n_min <= n <= n_max` and summarizes them.
pub fn value_sweep<T: Scalar>(
    seq: &UnderlyingSequence<T>,
    n_min: usize,
    n_max: usize,
) -> Result<FamilyReport<T>, FamilyError> {
    check_range(n_min, n_max)?;
    let p = seq.prefix(n_max)?;
    let solutions: Vec<ThresholdSolution<T>> =
        solve_horizons(&p, n_min, n_max)?.iter().map(SuffixTables::solve).collect();
    let n_star = n_star_of_prefix(&p);
    let settled_from = settled_of_prefix(&p);
    let values: Vec<T> = solutions.iter().map(|s| s.value.clone()).collect();
    let coincidences = values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].tie_eq(&w[1]))
        .map(|(i, _)| Coincidence { n: n_min + i, reasons: vec![CoincidenceReason::Direct] })
        .collect();
    let dual_thresholds = solutions
        .iter()
        .enumerate()
        .filter(|(_, s)| s.dual_threshold)
        .map(|(i, _)| n_min + i)
        .collect();
    Ok(FamilyReport {
        n_min,
        n_max,
        monotonicity: observed_class(&values, n_min, settled_from),
        thresholds: solutions.iter().map(|s| s.threshold).collect(),
        degenerate: solutions.iter().map(|s| s.degenerate).collect(),
        values,
        n_star,
        settled_from,
        coincidences,
        dual_thresholds,
    })
}

/// Classification of a sweep, checked against the monotonicity theory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub class: MonotonicityClass,
    /// Monotonicity of `(p_k)` on `k >= N*` over the sweep range, if any.
    pub sequence_tail: Option<Monotonicity>,
    /// Whether a theorem applied and was confirmed.
    pub theorem_checked: bool,
}

/// Classifies `V(n)` and confirms it against the theory: a non-increasing
/// tail `(p_k)_{k >= N*}` forces non-increasing values from the first
/// horizon with `R(1,n) >= 1` on (`N*` or `N* + 1`); a
/// non-decreasing tail forces non-decreasing values everywhere. A mismatch
/// means a solver defect and is reported as an error.
pub fn classify_monotonicity<T: Scalar>(
    report: &FamilyReport<T>,
    seq: &UnderlyingSequence<T>,
) -> Result<Classification, FamilyError> {
    let start = report.n_star.start().ok_or_else(|| {
        FamilyError::PreconditionNotMet(format!("N* lies beyond the sweep limit {}", report.n_max))
    })?;
    let first = report.settled_from.unwrap_or(report.n_max + 1).max(report.n_min);
    if report.n_max < first + 1 {
        return Err(FamilyError::PreconditionNotMet(format!(
            "sweep {}..={} must cover at least two horizons with R(1,n) >= 1 (N* = {})",
            report.n_min, report.n_max, report.n_star
        )));
    }
    let p = seq.prefix(report.n_max)?;
    let tail = &p[start - 1..];
    let from_start = &report.values[first - report.n_min..];
    let n_at = |i: usize| first + i;

    let mut theorem_checked = false;
    let sequence_tail = if is_monotone(tail, Monotonicity::NonIncreasing) {
        Some(Monotonicity::NonIncreasing)
    } else if is_monotone(tail, Monotonicity::NonDecreasing) {
        Some(Monotonicity::NonDecreasing)
    } else {
        None
    };
    if is_monotone(tail, Monotonicity::NonIncreasing) {
        if let Some(i) = from_start.windows(2).position(|w| !w[1].tie_le(&w[0])) {
            return Err(FamilyError::InconsistentWithTheorem {
                n: n_at(i),
                detail: "non-increasing probabilities beyond N* but V(n+1) > V(n)".into(),
            });
        }
        theorem_checked = true;
    }
    if is_monotone(tail, Monotonicity::NonDecreasing) {
        if let Some(i) = report.values.windows(2).position(|w| !w[0].tie_le(&w[1])) {
            return Err(FamilyError::InconsistentWithTheorem {
                n: report.n_min + i,
                detail: "non-decreasing probabilities beyond N* but V(n+1) < V(n)".into(),
            });
        }
        theorem_checked = true;
    }
    Ok(Classification { class: report.monotonicity, sequence_tail, theorem_checked })
}

/// Whether the coincidence criterion applies on `p`: non-increasing, `0 < p_j < 1`.
fn criterion_applies<T: Scalar>(p: &[T]) -> bool {
    is_monotone(p, Monotonicity::NonIncreasing) && p.iter().all(|v| *v > T::zero() && *v < T::one())
}

/// Solutions and tables for horizons `lo..=hi`, keyed by horizon.
struct Horizons<T> {
    lo: usize,
    tables: Vec<SuffixTables<T>>,
    solutions: Vec<ThresholdSolution<T>>,
}

impl<T: Scalar> Horizons<T> {
    fn new(p: &[T], lo: usize, hi: usize) -> Result<Self, FamilyError> {
        let tables = solve_horizons(p, lo, hi)?;
        let solutions = tables.iter().map(SuffixTables::solve).collect();
        Ok(Self { lo, tables, solutions })
    }

    fn tables(&self, n: usize) -> &SuffixTables<T> {
        &self.tables[n - self.lo]
    }

    fn solution(&self, n: usize) -> &ThresholdSolution<T> {
        &self.solutions[n - self.lo]
    }
}

/// Reasons from the criterion that hold for the pair `(n, n+1)`.
fn criterion_reasons<T: Scalar>(p: &[T], h: &Horizons<T>, n: usize) -> Vec<CoincidenceReason> {
    let s_n = h.solution(n).threshold;
    let s_next = h.solution(n + 1).threshold;
    let tables = h.tables(n);
    let mut reasons = Vec::new();
    if tables.r(s_n).is_one() {
        reasons.push(CoincidenceReason::DualThreshold);
    }
    if tables.r(s_next).is_one() {
        reasons.push(CoincidenceReason::TailOddsOne);
    }
    if p[s_n - 1].tie_eq(&p[n]) {
        reasons.push(CoincidenceReason::EqualEndpoints);
    }
    reasons
}

fn validate_declared<T: Scalar>(seq: &UnderlyingSequence<T>, upto: usize) -> Result<Vec<T>, FamilyError> {
    seq.prefix(upto).map_err(|e| match e {
        FamilyError::MonotonicityViolated { declared, index } => FamilyError::PreconditionNotMet(format!(
            "declared {declared} monotonicity fails at index {index}"
        )),
        other => other,
    })
}

/// All `n` in `n_min..=n_max` with `V(n+1) = V(n)`, with reasons.
///
/// The criterion applies to non-increasing sequences with `0 < p < 1` at
/// horizons where `R(s(n),n) >= 1`, i.e. from `N*` on (`N* + 1` when
/// `R(1,N*) < 1`). Below that, `(b)` can hold without a coincidence (constant
/// `p = 3/10`, `n = 2`), so those horizons are compared directly.
///
/// When the criterion applies, every reported coincidence must be explained
/// by (a) or (b) and every occurrence of (a) or (b) must produce a
/// coincidence; anything else is an [`FamilyError::InconsistentWithTheorem`].
pub fn detect_coincidences<T: Scalar>(
    seq: &UnderlyingSequence<T>,
    n_min: usize,
    n_max: usize,
) -> Result<Vec<Coincidence>, FamilyError> {
    check_range(n_min, n_max)?;
    let p = validate_declared(seq, n_max + 1)?;
    let h = Horizons::new(&p, n_min, n_max + 1)?;
    let theory = criterion_applies(&p);
    let mut out = Vec::new();
    for n in n_min..=n_max {
        let equal = h.solution(n + 1).value.tie_eq(&h.solution(n).value);
        let tail = h.tables(n).r(h.solution(n).threshold);
        if !theory || !(tail.at_least_one() || tail.is_one()) {
            if equal {
                out.push(Coincidence { n, reasons: vec![CoincidenceReason::Direct] });
            }
            continue;
        }
        let reasons = criterion_reasons(&p, &h, n);
        match (equal, reasons.is_empty()) {
            (true, false) => out.push(Coincidence { n, reasons }),
            (false, true) => {}
            (true, true) => {
                return Err(FamilyError::InconsistentWithTheorem {
                    n,
                    detail: "V(n+1) = V(n) without condition (a) or (b)".into(),
                })
            }
            (false, false) => {
                return Err(FamilyError::InconsistentWithTheorem {
                    n,
                    detail: format!("conditions {reasons:?} hold but V(n+1) != V(n)"),
                })
            }
        }
    }
    Ok(out)
}

/// Uniqueness of the threshold and the value at one horizon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UniquenessEntry {
    pub n: usize,
    pub threshold: usize,
    /// `R(s(n),n) != 1`.
    pub unique_threshold: bool,
    /// `V(n)` differs from `V(n-1)` and `V(n+1)` where those horizons exist.
    pub unique_value: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UniquenessReport {
    pub entries: Vec<UniquenessEntry>,
    /// Whether the coincidence criterion applied.
    pub criterion: bool,
}

impl UniquenessReport {
    pub fn all_unique(&self) -> bool {
        self.entries.iter().all(|e| e.unique_threshold && e.unique_value)
    }
}

/// Per-horizon uniqueness of thresholds and values. Values are compared with
/// the neighbouring horizons inside `n_min..=n_max + 1`; `n_max + 1` is
/// skipped when the generator ends at `n_max`.
pub fn uniqueness_report<T: Scalar>(
    seq: &UnderlyingSequence<T>,
    n_min: usize,
    n_max: usize,
) -> Result<UniquenessReport, FamilyError> {
    check_range(n_min, n_max)?;
    let upper = match seq.get(n_max + 1) {
        Ok(_) => n_max + 1,
        Err(FamilyError::GeneratorExhausted { .. }) => n_max,
        Err(e) => return Err(e),
    };
    let lower = n_min;
    let p = validate_declared(seq, upper)?;
    let h = Horizons::new(&p, lower, upper)?;
    let criterion = criterion_applies(&p);

    // coincident[n] for pairs (n, n+1) with lower <= n < upper.
    let coincident = |n: usize| -> Result<bool, FamilyError> {
        let equal = h.solution(n + 1).value.tie_eq(&h.solution(n).value);
        if criterion {
            let predicted = !criterion_reasons(&p, &h, n).is_empty();
            if predicted != equal {
                return Err(FamilyError::InconsistentWithTheorem {
                    n,
                    detail: "coincidence criterion disagrees with the values".into(),
                });
            }
        }
        Ok(equal)
    };

    let mut entries = Vec::with_capacity(n_max - n_min + 1);
    for n in n_min..=n_max {
        let solution = h.solution(n);
        let before = n > lower && coincident(n - 1)?;
        let after = n < upper && coincident(n)?;
        entries.push(UniquenessEntry {
            n,
            threshold: solution.threshold,
            unique_threshold: !solution.dual_threshold,
            unique_value: !(before || after),
        });
    }
    Ok(UniquenessReport { entries, criterion })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{parse_rational, Rational};

    fn rat(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    #[test]
    fn n_star_examples() {
        assert_eq!(n_star(&UnderlyingSequence::constant(rat("1/5")), 100).unwrap(), NStar::At(4));
        assert_eq!(n_star(&UnderlyingSequence::constant(0.5f64), 100).unwrap(), NStar::At(1));
        // r_k = 2^-(k+1): partial sums stay below 1/2.
        let halving = UnderlyingSequence::rule(|k| {
            let r = Rational::from_ratio(1, 1u64 << (k + 1).min(62));
            Some(r.clone() / (Rational::from_ratio(1, 1) + r))
        });
        assert_eq!(n_star(&halving, 60).unwrap(), NStar::BeyondRange);
        assert_eq!(n_star(&UnderlyingSequence::constant(0.9f64), 5).unwrap(), NStar::At(0));
        assert!(n_star(&UnderlyingSequence::constant(0.9f64), 0).is_err());
    }

    #[test]
    fn sweep_secretary_small() {
        let r = value_sweep(&UnderlyingSequence::<Rational>::secretary(), 2, 3).unwrap();
        assert_eq!(r.value(2), &rat("1/2"));
        assert_eq!(r.value(3), &rat("1/2"));
        assert_eq!(r.coincidences, vec![Coincidence { n: 2, reasons: vec![CoincidenceReason::Direct] }]);
    }

    #[test]
    fn sweep_constant_half() {
        let r = value_sweep(&UnderlyingSequence::constant(0.5f64), 1, 6).unwrap();
        assert!(r.values.iter().all(|&v| v == 0.5));
        assert_eq!(r.thresholds, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(r.dual_thresholds, vec![2, 3, 4, 5, 6]);
        assert_eq!(r.coincidences.len(), 5);
        assert_eq!(r.monotonicity, MonotonicityClass::NonIncreasingBeyondNStar);
    }

    #[test]
    fn sweep_games() {
        let seq = UnderlyingSequence::explicit(vec![0.1, 0.2, 0.24, 0.25, 0.251]);
        let r = value_sweep(&seq, 4, 5).unwrap();
        assert!((r.value(4) - 0.4146).abs() < 1e-12);
        assert!((r.value(5) - 0.421546).abs() < 1e-12);
        assert!(r.value(4) < r.value(5));
        assert!(matches!(value_sweep(&seq, 4, 6), Err(FamilyError::GeneratorExhausted { index: 6 })));
        assert!(matches!(value_sweep(&seq, 0, 3), Err(FamilyError::InvalidRange { .. })));
        assert!(matches!(value_sweep(&seq, 4, 3), Err(FamilyError::InvalidRange { .. })));
    }

    #[test]
    fn generator_errors_carry_the_index() {
        let bad = UnderlyingSequence::rule(|k| Some(if k == 3 { 1.5 } else { 0.1 }));
        assert!(matches!(
            value_sweep(&bad, 1, 5),
            Err(FamilyError::ProbabilityOutOfRange { index: 3, .. })
        ));
        let lying = UnderlyingSequence::explicit(vec![0.1, 0.3]).declare(Monotonicity::NonIncreasing);
        assert!(matches!(
            lying.prefix(2),
            Err(FamilyError::MonotonicityViolated { index: 1, .. })
        ));
    }

    #[test]
    fn classify_secretary() {
        let seq = UnderlyingSequence::<f64>::secretary();
        let r = value_sweep(&seq, 3, 50).unwrap();
        let c = classify_monotonicity(&r, &seq).unwrap();
        assert_eq!(c.class, MonotonicityClass::NonIncreasingBeyondNStar);
        assert!(c.theorem_checked);
    }

    #[test]
    fn classify_increasing_sequence() {
        let seq = UnderlyingSequence::rule(|k| Some((Rational::from_ratio(1, 10) + Rational::from_ratio(k as u64, 100)).min(Rational::from_ratio(1, 1))));
        let r = value_sweep(&seq, 1, 120).unwrap();
        let c = classify_monotonicity(&r, &seq).unwrap();
        assert_eq!(c.class, MonotonicityClass::NonDecreasingEverywhere);
        assert_eq!(c.sequence_tail, Some(Monotonicity::NonDecreasing));
        assert!(c.theorem_checked);
    }

    #[test]
    fn classify_constant_sequence() {
        let seq = UnderlyingSequence::constant(rat("1/3"));
        let r = value_sweep(&seq, 1, 12).unwrap();
        let c = classify_monotonicity(&r, &seq).unwrap();
        assert_eq!(c.class, MonotonicityClass::NonIncreasingBeyondNStar);
        let coincidences = detect_coincidences(&seq, 1, 12).unwrap();
        let ns: Vec<usize> = coincidences.iter().map(|c| c.n).collect();
        assert_eq!(ns, (2..=12).collect::<Vec<_>>());
        assert!(coincidences.iter().all(|c| c.has(CoincidenceReason::EqualEndpoints)));
    }

    #[test]
    fn equal_endpoints_below_n_star_is_not_a_coincidence() {
        // r = 3/7: R(1,2) = 6/7 < 1, and V(2) = 0.42 < V(3) = 0.441.
        let seq = UnderlyingSequence::constant(rat("3/10"));
        let coincidences = detect_coincidences(&seq, 1, 8).unwrap();
        assert_eq!(coincidences.first().map(|c| c.n), Some(3));
        assert_eq!(value_sweep(&seq, 2, 3).unwrap().values, vec![rat("21/50"), rat("441/1000")]);
    }

    #[test]
    fn classify_detects_inconsistent_reports() {
        let seq = UnderlyingSequence::<f64>::secretary();
        let mut r = value_sweep(&seq, 3, 10).unwrap();
        r.values[4] += 0.1;
        assert!(matches!(
            classify_monotonicity(&r, &seq),
            Err(FamilyError::InconsistentWithTheorem { .. })
        ));
    }

    #[test]
    fn classify_requires_n_star_inside_range() {
        let seq = UnderlyingSequence::constant(0.01f64);
        let r = value_sweep(&seq, 1, 10).unwrap();
        assert_eq!(r.n_star, NStar::BeyondRange);
        assert!(matches!(classify_monotonicity(&r, &seq), Err(FamilyError::PreconditionNotMet(_))));
    }

    #[test]
    fn coincidences_constant_half() {
        let c = detect_coincidences(&UnderlyingSequence::constant(rat("1/2")), 1, 10).unwrap();
        assert_eq!(c.len(), 10);
        assert!(c.iter().all(|c| c.has(CoincidenceReason::EqualEndpoints)));
    }

    #[test]
    fn coincidences_secretary_fallback_is_direct() {
        // p_1 = 1 puts the secretary sequence outside the criterion's hypotheses.
        let c = detect_coincidences(&UnderlyingSequence::<Rational>::secretary(), 3, 60).unwrap();
        assert!(c.is_empty());
        let c = detect_coincidences(&UnderlyingSequence::<Rational>::secretary(), 2, 3).unwrap();
        assert_eq!(c, vec![Coincidence { n: 2, reasons: vec![CoincidenceReason::Direct] }]);
    }

    #[test]
    fn coincidence_from_tail_odds_one() {
        // n = 2: p = (1/2, 1/3); s(2) = 1 (R(1,2) = 3/2, R(2,2) = 1/2).
        // p_3 = 1/3 gives R(2,3) = 1, so s(3) = 2 and R(s(3), 2) = R(2,2) = 1/2... not one.
        // Instead use p = (1/2, 1/3, 1/3, 1/3): at n = 3, s(3) = 2 (R(2,3) = 1).
        let seq = UnderlyingSequence::explicit(vec![rat("1/2"), rat("1/3"), rat("1/3"), rat("1/4")]);
        let c = detect_coincidences(&seq, 1, 3).unwrap();
        let at3 = c.iter().find(|c| c.n == 3).expect("coincidence at n = 3");
        assert!(at3.has(CoincidenceReason::DualThreshold));
        let v3 = seq.problem(3).unwrap().solve().value;
        let v4 = seq.problem(4).unwrap().solve().value;
        assert_eq!(v3, v4);
    }

    #[test]
    fn coincidence_precondition_violation() {
        let seq = UnderlyingSequence::explicit(vec![0.1, 0.3, 0.2]).declare(Monotonicity::NonIncreasing);
        assert!(matches!(detect_coincidences(&seq, 1, 2), Err(FamilyError::PreconditionNotMet(_))));
        let undeclared = UnderlyingSequence::explicit(vec![0.2, 0.3, 0.3, 0.1]);
        let c = detect_coincidences(&undeclared, 1, 3).unwrap();
        assert!(c.iter().all(|c| c.reasons == vec![CoincidenceReason::Direct]));
    }

    #[test]
    fn uniqueness_examples() {
        let r = uniqueness_report(&UnderlyingSequence::<Rational>::secretary(), 3, 80).unwrap();
        assert!(r.all_unique());

        let r = uniqueness_report(&UnderlyingSequence::explicit(vec![0.5, 0.5]), 2, 2).unwrap();
        assert!(!r.entries[0].unique_threshold);
        let p = OddsProblem::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(p.threshold_value(1).unwrap(), p.threshold_value(2).unwrap());

        let r = uniqueness_report(&UnderlyingSequence::explicit(vec![0.9]), 1, 1).unwrap();
        assert!(r.all_unique());
    }

    #[test]
    fn deleting_indices() {
        let seq = UnderlyingSequence::explicit(vec![0.1, 0.2, 0.3]);
        assert_eq!(seq.delete_index(2).unwrap().prefix(2).unwrap(), vec![0.1, 0.3]);
        assert!(seq.delete_index(4).is_err());
        assert!(seq.delete_index(0).is_err());

        let sec = UnderlyingSequence::<Rational>::secretary();
        let d = sec.delete_index(3).unwrap();
        assert_eq!(d.declared, Some(Monotonicity::NonIncreasing));
        let p = d.prefix(6).unwrap();
        assert!(p.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(p[2], rat("1/4"));
    }

    #[test]
    fn sweep_is_independent_of_pool_size() {
        let seq = UnderlyingSequence::<f64>::secretary();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| value_sweep(&seq, 1, 300).unwrap())
        };
        assert_eq!(run(1), run(3));
    }
}
