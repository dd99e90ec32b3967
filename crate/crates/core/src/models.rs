//! Concrete problem families: the classical secretary problem with exact
//! harmonic arithmetic, and group-interview schedules.
//!
//! In the secretary problem the indicator "candidate k is the best so far"
//! has `p_k = 1/k`, so `r_k = 1/(k-1)` and tail odds sums are differences of
//! harmonic numbers, `R(k,n) = H(n-1) - H(k-2)`.
//!
//! For group interviews, candidates are seen in groups of sizes
//! `m_1, ..., m_d`, and the interesting event on day `k` is that the best of
//! the first `M_k = m_1 + ... + m_k` candidates is in group `k`. Relative
//! ranks are uniform, so `p_k = m_k / M_k`, independently across days.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::odds::{OddsProblem, ThresholdSolution};
use crate::scalar::{Rational, Scalar};

/// Default limit on the number of schedules [`best_schedule`] may evaluate.
pub const DEFAULT_SCHEDULE_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("horizon must be at least {min}, got {n}")]
    HorizonTooSmall { n: usize, min: usize },
    #[error("R(1,n) is infinite for the secretary problem (p_1 = 1)")]
    InfiniteOdds,
    #[error("index {k} is out of range for horizon {n}")]
    IndexOutOfRange { k: usize, n: usize },
    #[error("schedule group sizes must be positive and non-empty")]
    InvalidSchedule,
    #[error("infeasible schedule constraints: {0}")]
    InfeasibleConstraints(String),
    #[error("{count} candidate schedules exceed the cap {cap}")]
    TooManySchedules { count: u64, cap: u64 },
    #[error("certificate failed at n = {n}: {reason}")]
    CertificateFailure { n: usize, reason: String },
}

/// `p_k = 1/k` for `k = 1..=n`.
pub fn secretary_problem<T: Scalar>(n: usize) -> Result<OddsProblem<T>, ModelError> {
    if n == 0 {
        return Err(ModelError::HorizonTooSmall { n, min: 1 });
    }
    let p = (1..=n as u64).map(|k| T::from_ratio(1, k)).collect();
    Ok(OddsProblem::new(p).expect("1/k is a probability"))
}

/// `H(n) = 1 + 1/2 + ... + 1/n`, with `H(0) = 0`.
pub fn harmonic(n: usize) -> Rational {
    harmonic_range(0, n)
}

/// `H(n) - H(k) = 1/(k+1) + ... + 1/n` summed over a common denominator.
fn harmonic_range(k: usize, n: usize) -> Rational {
    if n <= k {
        return Rational::zero();
    }
    let lcm = (k + 1..=n).fold(BigInt::one(), |acc, j| acc.lcm(&BigInt::from(j)));
    let numer: BigInt = (k + 1..=n).map(|j| &lcm / BigInt::from(j)).sum();
    Rational::new(numer, lcm)
}

/// Exact secretary tail odds `R(k,n) = H(n-1) - H(k-2)` for `2 <= k <= n`.
#[allow(non_snake_case)]
pub fn harmonic_R(k: usize, n: usize) -> Result<Rational, ModelError> {
    if k == 1 {
        return Err(ModelError::InfiniteOdds);
    }
    if k == 0 || k > n {
        return Err(ModelError::IndexOutOfRange { k, n });
    }
    Ok(harmonic_range(k - 2, n - 1))
}

/// Whether `H(n) - H(k)` is an integer, by exact summation. Requires `k < n`.
pub fn harmonic_diff_is_integer(k: usize, n: usize) -> bool {
    assert!(k < n, "harmonic_diff_is_integer needs k < n (got k={k}, n={n})");
    harmonic_range(k, n).is_integer()
}

/// Independent decision of the same question from 2-adic valuations.
///
/// Among `k+1..=n` exactly one `j` carries the largest power `2^l` (two
/// multiples of `2^l` would enclose a multiple of `2^(l+1)`). Multiplying the
/// sum by `2^(l-1)` leaves one term with an even denominator over an odd
/// numerator, so for `l >= 1` the sum cannot be an integer. With `l = 0`
/// there is a single odd summand `1/j`, an integer only for `j = 1`.
pub fn harmonic_diff_is_integer_2adic(k: usize, n: usize) -> bool {
    assert!(k < n, "harmonic_diff_is_integer_2adic needs k < n (got k={k}, n={n})");
    let top = (k + 1..=n).map(|j| j.trailing_zeros()).max().expect("non-empty range");
    let carriers = (k + 1..=n).filter(|j| j.trailing_zeros() == top).count();
    debug_assert_eq!(carriers, 1, "unique highest power of two");
    if top >= 1 {
        false
    } else {
        n == k + 1 && n == 1
    }
}

/// Per-horizon data of the secretary certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecretaryEntry {
    pub n: usize,
    pub threshold: usize,
    #[serde(serialize_with = "crate::scalar::ser_scalar")]
    pub value: Rational,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecretaryCertificate {
    /// Entries for `n = 1..=n_max`; the strict claims cover `n >= 3`.
    pub entries: Vec<SecretaryEntry>,
    /// `V(2) = V(3)`, the excluded boundary case.
    pub boundary_tie: bool,
    pub checked_from: usize,
    pub n_max: usize,
}

/// Verifies exactly, for `3 <= n < n_max`, that `V(n+1) < V(n)`, and for
/// `3 <= n <= n_max` that `R(s(n),n) != 1`, plus `R(s(n+1),n) != 1` when
/// `n < n_max`. Each `R != 1` is established twice: by the harmonic
/// integrality test and by direct comparison of the exact tail sum with 1.
pub fn secretary_certificate(n_max: usize) -> Result<SecretaryCertificate, ModelError> {
    if n_max < 3 {
        return Err(ModelError::HorizonTooSmall { n: n_max, min: 3 });
    }
    let solutions: Vec<ThresholdSolution<Rational>> = {
        use rayon::prelude::*;
        (1..=n_max)
            .into_par_iter()
            .map(|n| secretary_problem::<Rational>(n).map(|p| p.solve()))
            .collect::<Result<_, _>>()?
    };
    let at = |n: usize| &solutions[n - 1];

    let tail_not_one = |k: usize, n: usize| -> Result<(), ModelError> {
        // R(k,n) = H(n-1) - H(k-2); for k = n+1 the sum is empty.
        if k > n {
            return Ok(());
        }
        let fail = |reason: String| Err(ModelError::CertificateFailure { n, reason });
        if k == 1 {
            return fail("threshold 1 has infinite odds".into());
        }
        let r = harmonic_R(k, n)?;
        if r.is_one() {
            return fail(format!("R({k},{n}) = 1"));
        }
        let (lo, hi) = (k - 2, n - 1);
        if harmonic_diff_is_integer(lo, hi) || harmonic_diff_is_integer_2adic(lo, hi) {
            return fail(format!("H({hi}) - H({lo}) is an integer"));
        }
        Ok(())
    };

    for n in 3..=n_max {
        let here = at(n);
        if here.dual_threshold {
            return Err(ModelError::CertificateFailure { n, reason: "dual threshold".into() });
        }
        tail_not_one(here.threshold, n)?;
        if n < n_max {
            let next = at(n + 1);
            tail_not_one(next.threshold, n)?;
            if next.value >= here.value {
                return Err(ModelError::CertificateFailure {
                    n,
                    reason: format!("V({}) = {} is not below V({n}) = {}", n + 1, next.value, here.value),
                });
            }
        }
    }

    let entries = solutions
        .into_iter()
        .enumerate()
        .map(|(i, s)| SecretaryEntry { n: i + 1, threshold: s.threshold, value: s.value })
        .collect::<Vec<_>>();
    Ok(SecretaryCertificate {
        boundary_tie: entries[1].value == entries[2].value,
        entries,
        checked_from: 3,
        n_max,
    })
}

/// Group sizes `m_1..m_d` for consecutive interview days.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Schedule {
    sizes: Vec<u64>,
}

impl Schedule {
    pub fn new(sizes: Vec<u64>) -> Result<Self, ModelError> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(ModelError::InvalidSchedule);
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn total(&self) -> u64 {
        self.sizes.iter().sum()
    }

    /// Cumulative sizes `M_k`.
    pub fn cumulative(&self) -> Vec<u64> {
        self.sizes
            .iter()
            .scan(0, |acc, &m| {
                *acc += m;
                Some(*acc)
            })
            .collect()
    }
}

/// `p_k = m_k / M_k`; in particular `p_1 = 1`.
pub fn group_problem<T: Scalar>(schedule: &Schedule) -> OddsProblem<T> {
    let p = schedule
        .sizes
        .iter()
        .zip(schedule.cumulative())
        .map(|(&m, total)| T::from_ratio(m, total))
        .collect();
    OddsProblem::new(p).expect("m_k / M_k is a probability")
}

/// How the days after the fixed prefix may be filled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Completion {
    /// Any ordering of this multiset of sizes.
    Pool(Vec<u64>),
    /// Any composition of the remaining candidates into positive parts.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct BestSchedule<T> {
    pub schedule: Schedule,
    #[serde(serialize_with = "crate::scalar::ser_scalar")]
    pub value: T,
    pub threshold: usize,
    /// Number of admissible schedules evaluated.
    pub candidates: u64,
    /// Number of schedules tied with the maximum.
    pub maximizers: u64,
}

/// Distinct permutations of a multiset, in lexicographic order.
fn multiset_permutations(pool: &[u64]) -> Vec<Vec<u64>> {
    let mut current: Vec<u64> = pool.to_vec();
    current.sort_unstable();
    let mut out = vec![current.clone()];
    // Narayana's next-permutation.
    loop {
        let Some(i) = (1..current.len()).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..current.len()).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
        out.push(current.clone());
    }
}

/// `C(n, k)` saturating at `u64::MAX`.
fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Positive compositions of `total` into `parts` parts, lexicographically.
fn compositions(total: u64, parts: usize, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
    if parts == 0 {
        if total == 0 {
            out.push(prefix.clone());
        }
        return;
    }
    let rest = parts as u64 - 1;
    for first in 1..=total.saturating_sub(rest) {
        prefix.push(first);
        compositions(total - first, parts - 1, prefix, out);
        prefix.pop();
    }
}

/// Exhaustive search for the schedule maximizing the odds-algorithm value.
/// Ties go to the lexicographically smallest schedule.
pub fn best_schedule<T: Scalar>(
    total: u64,
    days: usize,
    prefix: &[u64],
    completion: &Completion,
    cap: u64,
) -> Result<BestSchedule<T>, ModelError> {
    let infeasible = |msg: String| Err(ModelError::InfeasibleConstraints(msg));
    if days == 0 || total < days as u64 {
        return infeasible(format!("need total >= days >= 1 (total {total}, days {days})"));
    }
    if prefix.contains(&0) {
        return infeasible("prefix sizes must be positive".into());
    }
    let fixed: u64 = prefix.iter().sum();
    if prefix.len() > days || fixed > total {
        return infeasible(format!("prefix {prefix:?} does not fit {days} days / {total} candidates"));
    }
    let open_days = days - prefix.len();
    let remainder = total - fixed;

    let tails: Vec<Vec<u64>> = match completion {
        Completion::Pool(pool) => {
            if pool.len() != open_days || pool.iter().sum::<u64>() != remainder || pool.contains(&0) {
                return infeasible(format!(
                    "pool {pool:?} must hold {open_days} positive sizes summing to {remainder}"
                ));
            }
            multiset_permutations(pool)
        }
        Completion::Free => {
            if (open_days == 0) != (remainder == 0) || remainder < open_days as u64 {
                return infeasible(format!("cannot split {remainder} candidates into {open_days} groups"));
            }
            let count = if open_days == 0 { 1 } else { binomial(remainder - 1, open_days as u64 - 1) };
            if count > cap {
                return Err(ModelError::TooManySchedules { count, cap });
            }
            let mut out = Vec::new();
            compositions(remainder, open_days, &mut Vec::new(), &mut out);
            out
        }
    };
    let candidates = tails.len() as u64;
    if candidates > cap {
        return Err(ModelError::TooManySchedules { count: candidates, cap });
    }

    let evaluated: Vec<(Schedule, ThresholdSolution<T>)> = tails
        .into_iter()
        .map(|tail| {
            let schedule = Schedule::new(prefix.iter().copied().chain(tail).collect())?;
            let solution = group_problem::<T>(&schedule).solve();
            Ok((schedule, solution))
        })
        .collect::<Result<_, ModelError>>()?;

    let max = evaluated
        .iter()
        .map(|(_, s)| &s.value)
        .fold(None::<&T>, |m, v| match m {
            Some(m) if m >= v => Some(m),
            _ => Some(v),
        })
        .expect("at least one candidate")
        .clone();
    let mut tied: Vec<&(Schedule, ThresholdSolution<T>)> =
        evaluated.iter().filter(|(_, s)| s.value.tie_eq(&max)).collect();
    tied.sort_by(|a, b| a.0.cmp(&b.0));
    let (schedule, solution) = tied[0].clone();
    Ok(BestSchedule {
        schedule,
        value: solution.value,
        threshold: solution.threshold,
        candidates,
        maximizers: tied.len() as u64,
    })
}
