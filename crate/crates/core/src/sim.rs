//! Monte Carlo validation of stopping strategies.
//!
//! Every trial draws its uniforms from a ChaCha8 stream selected by the trial
//! index, so a trial's indicators depend only on `(seed, trial, step)`.
//! Trials are spread over the current rayon pool and only win counts are
//! aggregated, which makes results identical for any number of workers.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::models::secretary_problem;
use crate::odds::OddsProblem;
use crate::oracle::StopSet;
use crate::scalar::Scalar;

/// z-quantile of the two-sided 95% normal interval.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error("estimator failed in trial {trial} at index {index}: {reason}")]
    EstimatorFailure { trial: u64, index: usize, reason: String },
}

/// Maps the indicators observed so far to estimates of `p_1..p_n`.
pub trait Estimator: Send + Sync {
    /// `history` holds `I_1..I_k`; the result must have length `n`.
    fn estimate(&self, history: &[bool], n: usize) -> Result<Vec<f64>, String>;
}

/// Running success rate with add-one smoothing, `(successes + 1) / (k + 2)`,
/// applied to every index.
#[derive(Debug, Clone, Copy, Default)]
pub struct SmoothedMean;

impl Estimator for SmoothedMean {
    fn estimate(&self, history: &[bool], n: usize) -> Result<Vec<f64>, String> {
        let successes = history.iter().filter(|&&b| b).count() as f64;
        let p = (successes + 1.0) / (history.len() as f64 + 2.0);
        Ok(vec![p; n])
    }
}

/// Ignores the history and returns fixed probabilities.
#[derive(Debug, Clone)]
pub struct KnownProbabilities(pub Vec<f64>);

impl Estimator for KnownProbabilities {
    fn estimate(&self, _history: &[bool], n: usize) -> Result<Vec<f64>, String> {
        if self.0.len() != n {
            return Err(format!("expected {n} probabilities, have {}", self.0.len()));
        }
        Ok(self.0.clone())
    }
}

#[derive(Clone)]
pub enum Strategy {
    /// Stop at the first success at index `>= s`.
    Threshold(usize),
    /// Stop at the first success inside the set.
    StopSet(StopSet),
    /// Re-run the odds-algorithm on estimated probabilities at every success.
    Adaptive(Arc<dyn Estimator>),
}

impl fmt::Debug for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Threshold(s) => f.debug_tuple("Threshold").field(s).finish(),
            Strategy::StopSet(set) => f.debug_tuple("StopSet").field(set).finish(),
            Strategy::Adaptive(_) => f.write_str("Adaptive(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    pub strategy: Strategy,
}

impl SimConfig {
    pub fn new(trials: u64, seed: u64, strategy: Strategy) -> Self {
        Self { trials, seed, strategy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub trials: u64,
    pub wins: u64,
    pub estimate: f64,
    /// Half-width of the approximate 95% normal interval.
    pub half_width: f64,
}

impl SimResult {
    pub fn from_counts(wins: u64, trials: u64) -> Self {
        let estimate = wins as f64 / trials as f64;
        let half_width = Z95 * (estimate * (1.0 - estimate) / trials as f64).sqrt();
        Self { trials, wins, estimate, half_width }
    }

    /// Whether `value` lies inside `estimate ± k * half_width`.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.estimate - value).abs() <= k * self.half_width
    }
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Samples `I_1..I_n` for one trial into `out`.
fn draw_indicators(p: &[f64], seed: u64, trial: u64, out: &mut Vec<bool>) {
    let mut rng = trial_rng(seed, trial);
    out.clear();
    out.extend(p.iter().map(|&pk| rng.random::<f64>() < pk));
}

/// Win iff the rule stops on a success and no success follows.
fn play(indicators: &[bool], stops_at: impl Fn(usize) -> bool) -> bool {
    match (1..=indicators.len()).find(|&k| indicators[k - 1] && stops_at(k)) {
        Some(k) => !indicators[k..].iter().any(|&b| b),
        None => false,
    }
}

fn count_wins(trials: u64, win: impl Fn(u64, &mut Vec<bool>) -> bool + Sync) -> u64 {
    (0..trials)
        .into_par_iter()
        .map_init(Vec::new, |buf, t| win(t, buf) as u64)
        .sum()
}

/// Monte Carlo estimate of the win probability of `config.strategy`.
pub fn simulate<T: Scalar>(problem: &OddsProblem<T>, config: &SimConfig) -> Result<SimResult, SimError> {
    if config.trials == 0 {
        return Err(SimError::NoTrials);
    }
    let p: Vec<f64> = problem.probabilities().iter().map(Scalar::to_f64).collect();
    let n = p.len();
    let seed = config.seed;
    let wins = match &config.strategy {
        Strategy::Threshold(s) => {
            if *s == 0 || *s > n {
                return Err(SimError::InvalidStrategy(format!("threshold {s} outside 1..={n}")));
            }
            count_wins(config.trials, |t, buf| {
                draw_indicators(&p, seed, t, buf);
                play(buf, |k| k >= *s)
            })
        }
        Strategy::StopSet(set) => {
            if set.horizon() != n {
                return Err(SimError::InvalidStrategy(format!(
                    "stop-set horizon {} differs from problem horizon {n}",
                    set.horizon()
                )));
            }
            count_wins(config.trials, |t, buf| {
                draw_indicators(&p, seed, t, buf);
                play(buf, |k| set.contains(k))
            })
        }
        Strategy::Adaptive(_) => return Ok(adaptive_simulate(&p, config)?.result),
    };
    Ok(SimResult::from_counts(wins, config.trials))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialDecision {
    pub stopped_at: Option<usize>,
    pub won: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveResult {
    pub result: SimResult,
    /// Full-information optimum `V(n)` for the true probabilities.
    pub optimal_value: f64,
    /// `optimal_value - result.estimate`.
    pub gap: f64,
    pub decisions: Vec<TrialDecision>,
}

fn adaptive_trial(
    p: &[f64],
    estimator: &dyn Estimator,
    seed: u64,
    trial: u64,
    buf: &mut Vec<bool>,
) -> Result<TrialDecision, SimError> {
    draw_indicators(p, seed, trial, buf);
    let n = p.len();
    for k in 1..=n {
        if !buf[k - 1] {
            continue;
        }
        let fail = |reason: String| SimError::EstimatorFailure { trial, index: k, reason };
        let estimates = estimator.estimate(&buf[..k], n).map_err(fail)?;
        if estimates.len() != n {
            return Err(fail(format!("returned {} estimates for horizon {n}", estimates.len())));
        }
        let problem = OddsProblem::new(estimates).map_err(|e| fail(e.to_string()))?;
        if k >= problem.solve().threshold {
            let won = !buf[k..].iter().any(|&b| b);
            return Ok(TrialDecision { stopped_at: Some(k), won });
        }
    }
    Ok(TrialDecision { stopped_at: None, won: false })
}

/// Plug-in odds-algorithm: at every success the estimator's view of the
/// probabilities is solved and the rule stops once the current index has
/// reached the estimated threshold.
pub fn adaptive_simulate(true_p: &[f64], config: &SimConfig) -> Result<AdaptiveResult, SimError> {
    let Strategy::Adaptive(estimator) = &config.strategy else {
        return Err(SimError::InvalidStrategy("adaptive simulation needs an estimator".into()));
    };
    if config.trials == 0 {
        return Err(SimError::NoTrials);
    }
    let problem = OddsProblem::new(true_p.to_vec())
        .map_err(|e| SimError::InvalidStrategy(format!("true probabilities: {e}")))?;
    let decisions: Vec<TrialDecision> = (0..config.trials)
        .into_par_iter()
        .map_init(Vec::new, |buf, t| adaptive_trial(true_p, estimator.as_ref(), config.seed, t, buf))
        .collect::<Result<_, _>>()?;
    let wins = decisions.iter().filter(|d| d.won).count() as u64;
    let result = SimResult::from_counts(wins, config.trials);
    let optimal_value = problem.solve().value;
    Ok(AdaptiveResult { gap: optimal_value - result.estimate, result, optimal_value, decisions })
}

/// Secretary problem simulated from uniformly random rankings.
///
/// `candidates` distinct qualities arrive in random order; the rule stops at
/// the first relatively best candidate at position `>= threshold` and wins
/// if that candidate is the overall best. With `delete_worst`, the worst
/// candidate is removed before play, leaving `candidates - 1` positions.
pub fn simulate_ranks(
    candidates: usize,
    threshold: usize,
    delete_worst: bool,
    trials: u64,
    seed: u64,
) -> Result<SimResult, SimError> {
    if trials == 0 {
        return Err(SimError::NoTrials);
    }
    let played = candidates - usize::from(delete_worst);
    if played == 0 || threshold == 0 || threshold > played {
        return Err(SimError::InvalidStrategy(format!("threshold {threshold} outside 1..={played}")));
    }
    let wins = (0..trials)
        .into_par_iter()
        .map_init(Vec::new, |order: &mut Vec<usize>, t| {
            let mut rng = trial_rng(seed, t);
            order.clear();
            order.extend(0..candidates);
            order.shuffle(&mut rng);
            if delete_worst {
                order.retain(|&q| q != 0);
            }
            let best = candidates - 1;
            let mut running = None;
            for (i, &q) in order.iter().enumerate() {
                let relatively_best = running.is_none_or(|r| q > r);
                if relatively_best {
                    running = Some(q);
                    if i + 1 >= threshold {
                        return (q == best) as u64;
                    }
                }
            }
            0
        })
        .sum();
    Ok(SimResult::from_counts(wins, trials))
}

/// Secretary values for `n` and `n + 1` candidates, next to the prophet who
/// knows where the worst of `n + 1` candidates is and plays the `n`-rule on
/// the rest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProphetComparison {
    pub n: usize,
    pub analytic_v_n: f64,
    pub analytic_v_next: f64,
    pub v_n: SimResult,
    pub v_next: SimResult,
    pub prophet: SimResult,
}

impl ProphetComparison {
    /// Simulated `V(n+1) <= V(n)` up to the sum of both half-widths.
    pub fn ordered_within_noise(&self) -> bool {
        self.v_next.estimate <= self.v_n.estimate + self.v_n.half_width + self.v_next.half_width
    }
}

pub fn prophet_comparison(n: usize, trials: u64, seed: u64) -> Result<ProphetComparison, SimError> {
    let solve = |m: usize| {
        secretary_problem::<f64>(m)
            .map(|p| p.solve())
            .map_err(|e| SimError::InvalidStrategy(e.to_string()))
    };
    let (here, next) = (solve(n)?, solve(n + 1)?);
    Ok(ProphetComparison {
        n,
        analytic_v_n: here.value,
        analytic_v_next: next.value,
        v_n: simulate_ranks(n, here.threshold, false, trials, seed)?,
        v_next: simulate_ranks(n + 1, next.threshold, false, trials, seed.wrapping_add(1))?,
        prophet: simulate_ranks(n + 1, here.threshold, true, trials, seed.wrapping_add(1))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn game5() -> OddsProblem<f64> {
        OddsProblem::new(vec![0.1, 0.2, 0.24, 0.25, 0.251]).unwrap()
    }

    #[test]
    fn certain_success_always_wins() {
        let p = OddsProblem::new(vec![1.0]).unwrap();
        let r = simulate(&p, &SimConfig::new(1000, 1, Strategy::Threshold(1))).unwrap();
        assert_eq!((r.wins, r.estimate, r.half_width), (1000, 1.0, 0.0));
    }

    #[test]
    fn empty_stop_set_never_wins() {
        let p = OddsProblem::new(vec![0.5]).unwrap();
        let r = simulate(&p, &SimConfig::new(1000, 1, Strategy::StopSet(StopSet::empty(1)))).unwrap();
        assert_eq!(r.estimate, 0.0);
    }

    #[test]
    fn invalid_strategies_are_rejected() {
        let g = game5();
        assert!(matches!(
            simulate(&g, &SimConfig::new(10, 1, Strategy::Threshold(6))),
            Err(SimError::InvalidStrategy(_))
        ));
        assert!(matches!(
            simulate(&g, &SimConfig::new(10, 1, Strategy::StopSet(StopSet::empty(4)))),
            Err(SimError::InvalidStrategy(_))
        ));
        assert_eq!(simulate(&g, &SimConfig::new(0, 1, Strategy::Threshold(1))), Err(SimError::NoTrials));
        assert!(adaptive_simulate(&[0.5], &SimConfig::new(10, 1, Strategy::Threshold(1))).is_err());
    }

    #[test]
    fn threshold_estimate_is_close() {
        let r = simulate(&game5(), &SimConfig::new(200_000, 7, Strategy::Threshold(2))).unwrap();
        assert!(r.covers(0.421546, 4.0), "{r:?}");
    }

    #[test]
    fn seeds_reproduce() {
        let cfg = SimConfig::new(5000, 99, Strategy::Threshold(2));
        assert_eq!(simulate(&game5(), &cfg).unwrap(), simulate(&game5(), &cfg).unwrap());
    }

    #[test]
    fn known_estimator_matches_threshold_rule() {
        let p = vec![0.1, 0.2, 0.24, 0.25, 0.251];
        let cfg = SimConfig::new(20_000, 3, Strategy::Adaptive(Arc::new(KnownProbabilities(p.clone()))));
        let adaptive = adaptive_simulate(&p, &cfg).unwrap();
        let plain = simulate(&game5(), &SimConfig::new(20_000, 3, Strategy::Threshold(2))).unwrap();
        assert_eq!(adaptive.result, plain);
    }

    #[test]
    fn adaptive_single_index_wins_with_p1() {
        let cfg = SimConfig::new(50_000, 5, Strategy::Adaptive(Arc::new(SmoothedMean)));
        let r = adaptive_simulate(&[0.3], &cfg).unwrap();
        let plain = simulate(&OddsProblem::new(vec![0.3]).unwrap(), &SimConfig::new(50_000, 5, Strategy::Threshold(1)))
            .unwrap();
        assert_eq!(r.result, plain);
        assert!(r.result.covers(0.3, 4.0));
    }

    #[test]
    fn plug_in_odds_pay_for_estimation() {
        let cfg = SimConfig::new(50_000, 1, Strategy::Adaptive(Arc::new(SmoothedMean)));
        let r = adaptive_simulate(&[0.5; 10], &cfg).unwrap();
        assert_eq!(r.optimal_value, 0.5);
        assert!(r.result.estimate < 0.5 && r.result.estimate > 0.45, "{}", r.result.estimate);
        assert!(r.gap > 0.0);
        assert!(r.decisions.iter().filter(|d| d.won).all(|d| d.stopped_at.is_some()));
    }

    struct Broken;
    impl Estimator for Broken {
        fn estimate(&self, _: &[bool], n: usize) -> Result<Vec<f64>, String> {
            Ok(vec![1.5; n])
        }
    }

    #[test]
    fn estimator_failures_surface() {
        let cfg = SimConfig::new(100, 1, Strategy::Adaptive(Arc::new(Broken)));
        assert!(matches!(adaptive_simulate(&[0.9, 0.9], &cfg), Err(SimError::EstimatorFailure { .. })));
        let cfg = SimConfig::new(100, 1, Strategy::Adaptive(Arc::new(KnownProbabilities(vec![0.5]))));
        assert!(matches!(adaptive_simulate(&[0.9, 0.9], &cfg), Err(SimError::EstimatorFailure { .. })));
    }

    #[test]
    fn rank_simulation_matches_indicator_model() {
        let r = simulate_ranks(10, 4, false, 100_000, 11).unwrap();
        assert!(r.covers(3349.0 / 8400.0, 4.0), "{r:?}");
        assert!(simulate_ranks(3, 4, false, 10, 1).is_err());
    }

    #[test]
    fn prophet_with_deleted_worst_plays_the_smaller_problem() {
        let c = prophet_comparison(5, 100_000, 21).unwrap();
        assert!(c.prophet.covers(c.analytic_v_n, 4.0), "{c:?}");
        assert!(c.analytic_v_next <= c.analytic_v_n);
        assert!(c.ordered_within_noise());
    }

    #[test]
    fn interval_half_width() {
        let r = SimResult::from_counts(50, 100);
        assert!((r.half_width - Z95 * 0.05).abs() < 1e-15);
    }
}
