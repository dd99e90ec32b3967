//! `odds` command-line front end.
//!
//! Problems come from a JSON document (`--spec FILE`, `-` for stdin) or from
//! inline flags. A document looks like
//!
//! ```json
//! {"kind": "explicit", "p": ["0.1", "1/3", 0.25], "mode": "exact"}
//! ```
//!
//! with `kind` one of `explicit`, `constant` (`value`, `n`), `secretary`
//! (`n`), `group` (`sizes`) or `generator-table` (`p`). Probabilities may be
//! JSON numbers, decimal strings or `"num/den"` strings; a rational string
//! switches the run to exact mode. A JSON report written with `--json` can be
//! passed back as `--spec`; its `problem` member is used.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 internal consistency
//! failure (a result that contradicts the theory or the oracles).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::family::{
    classify_monotonicity, detect_coincidences, uniqueness_report, value_sweep, FamilyError,
    UnderlyingSequence,
};
use crate::models::{self, best_schedule, Completion, ModelError, Schedule};
use crate::odds::{OddsProblem, ProblemError};
use crate::oracle::{self, OracleError, StopSet};
use crate::scalar::{ArithmeticMode, Rational, Scalar};
use crate::sim::{self, SimConfig, SimError, SmoothedMean, Strategy};

#[derive(Debug)]
pub enum CliError {
    /// Bad input or usage; exit code 1.
    Input(String),
    /// A result contradicting the theory or an oracle; exit code 2.
    Consistency(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Consistency(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Consistency(m) => m,
        }
    }
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

impl From<ProblemError> for CliError {
    fn from(e: ProblemError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<FamilyError> for CliError {
    fn from(e: FamilyError) -> Self {
        match e {
            FamilyError::InconsistentWithTheorem { .. } => CliError::Consistency(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::CertificateFailure { .. } => CliError::Consistency(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Input(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Problem specifications
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecMode {
    Exact,
    Float,
}

/// A probability literal as written in a document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Number(serde_json::Number),
    Text(String),
}

impl Literal {
    fn text(&self) -> String {
        match self {
            Literal::Number(n) => n.to_string(),
            Literal::Text(t) => t.clone(),
        }
    }

    fn is_rational(&self) -> bool {
        matches!(self, Literal::Text(t) if t.contains('/'))
    }

    fn parse<T: Scalar>(&self, field: &str) -> Result<T, CliError> {
        T::parse_literal(&self.text())
            .ok_or_else(|| input(format!("field `{field}`: cannot parse probability {:?}", self.text())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpecKind {
    Explicit {
        p: Vec<Literal>,
    },
    Constant {
        value: Literal,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    Secretary {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    Group {
        sizes: Vec<u64>,
    },
    GeneratorTable {
        p: Vec<Literal>,
    },
}

/// Problem or underlying sequence description, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    #[serde(flatten)]
    pub kind: SpecKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<SpecMode>,
}

impl ProblemSpec {
    /// Reads a spec document, or the `problem` member of a previous report.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: Value = serde_json::from_str(text).map_err(|e| input(format!("invalid JSON: {e}")))?;
        let value = match value.get("problem") {
            Some(inner) if value.get("kind").is_none() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| input(format!("invalid problem specification: {e}")))
    }

    fn literals(&self) -> Vec<&Literal> {
        match &self.kind {
            SpecKind::Explicit { p } | SpecKind::GeneratorTable { p } => p.iter().collect(),
            SpecKind::Constant { value, .. } => vec![value],
            SpecKind::Secretary { .. } | SpecKind::Group { .. } => Vec::new(),
        }
    }

    /// Exact when requested or when any literal is a `num/den` string.
    pub fn is_exact(&self, exact_flag: bool) -> bool {
        exact_flag || self.mode == Some(SpecMode::Exact) || self.literals().iter().any(|l| l.is_rational())
    }

    fn with_mode(&self, mode: ArithmeticMode) -> Self {
        let mode = match mode {
            ArithmeticMode::ExactRational => SpecMode::Exact,
            ArithmeticMode::FloatingPoint => SpecMode::Float,
        };
        Self { kind: self.kind.clone(), mode: Some(mode) }
    }

    fn parse_list<T: Scalar>(p: &[Literal]) -> Result<Vec<T>, CliError> {
        p.iter().enumerate().map(|(i, l)| l.parse(&format!("p[{}]", i + 1))).collect()
    }

    /// The finite problem this spec describes.
    pub fn problem<T: Scalar>(&self) -> Result<OddsProblem<T>, CliError> {
        let need_n = |n: Option<usize>| n.ok_or_else(|| input("field `n`: horizon required for this command"));
        let p = match &self.kind {
            SpecKind::Explicit { p } | SpecKind::GeneratorTable { p } => Self::parse_list(p)?,
            SpecKind::Constant { value, n } => vec![value.parse::<T>("value")?; need_n(*n)?],
            SpecKind::Secretary { n } => return Ok(models::secretary_problem(need_n(*n)?)?),
            SpecKind::Group { sizes } => {
                let schedule = Schedule::new(sizes.clone()).map_err(|e| input(format!("field `sizes`: {e}")))?;
                return Ok(models::group_problem(&schedule));
            }
        };
        OddsProblem::new(p).map_err(|e| match e {
            ProblemError::ProbabilityOutOfRange { index, value } => {
                input(format!("field `p[{index}]`: probability {value} is outside [0, 1]"))
            }
            other => input(format!("field `p`: {other}")),
        })
    }

    /// The underlying sequence this spec describes (horizon fields are ignored).
    pub fn sequence<T: Scalar>(&self) -> Result<UnderlyingSequence<T>, CliError> {
        Ok(match &self.kind {
            SpecKind::Explicit { p } | SpecKind::GeneratorTable { p } => {
                UnderlyingSequence::explicit(Self::parse_list(p)?)
            }
            SpecKind::Constant { value, .. } => UnderlyingSequence::constant(value.parse("value")?),
            SpecKind::Secretary { .. } => UnderlyingSequence::secretary(),
            SpecKind::Group { sizes } => UnderlyingSequence::group_interview(sizes.clone()),
        })
    }

    /// Default horizon for sequence commands when none is given.
    fn natural_horizon(&self) -> Option<usize> {
        match &self.kind {
            SpecKind::Explicit { p } | SpecKind::GeneratorTable { p } => Some(p.len()),
            SpecKind::Constant { n, .. } | SpecKind::Secretary { n } => *n,
            SpecKind::Group { sizes } => Some(sizes.len()),
        }
    }
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(name = "odds", version, about = "Odds-algorithm optimal stopping toolkit")]
struct Cli {
    /// Worker threads for parallel sweeps, enumeration and simulation.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct SpecArgs {
    /// JSON problem specification or previous report ("-" reads stdin).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Probabilities p_1..p_n, comma separated (decimals or num/den).
    #[arg(long, value_delimiter = ',', conflicts_with = "spec")]
    p: Option<Vec<String>>,
    /// Constant probability for every index.
    #[arg(long, conflicts_with_all = ["spec", "p"])]
    constant: Option<String>,
    /// Classical secretary sequence p_k = 1/k.
    #[arg(long, conflicts_with_all = ["spec", "p", "constant"])]
    secretary: bool,
    /// Group-interview sizes m_1..m_d, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["spec", "p", "constant", "secretary"])]
    group: Option<Vec<u64>>,
    /// Horizon for constant or secretary problems.
    #[arg(long)]
    n: Option<usize>,
    /// Exact rational arithmetic.
    #[arg(long)]
    exact: bool,
}

#[derive(Args, Debug, Clone, Copy)]
struct OutputArgs {
    /// Machine-readable JSON output.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug, Clone, Copy)]
struct RangeArgs {
    #[arg(long, default_value_t = 1)]
    n_min: usize,
    /// Defaults to the horizon of the specification.
    #[arg(long)]
    n_max: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal threshold and value for one horizon.
    Solve {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Thresholds and values over a range of horizons.
    Sweep {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        range: RangeArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Coincidences V(n+1) = V(n) and uniqueness of thresholds and values.
    Coincide {
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        range: RangeArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Classical secretary problem.
    Secretary {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        exact: bool,
        /// Verify strict decrease and unique thresholds for 3 <= n' <= n.
        #[arg(long)]
        certificate: bool,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Best group-interview schedule.
    Schedule {
        #[arg(long)]
        total: u64,
        #[arg(long)]
        days: usize,
        /// Fixed leading group sizes.
        #[arg(long, value_delimiter = ',')]
        prefix: Vec<u64>,
        /// Sizes to arrange on the remaining days; any composition if omitted.
        #[arg(long, value_delimiter = ',')]
        pool: Option<Vec<u64>>,
        #[arg(long, default_value_t = models::DEFAULT_SCHEDULE_CAP)]
        cap: u64,
        #[arg(long)]
        exact: bool,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Cross-check the solver against backward induction and stop-set enumeration.
    Oracle {
        #[command(flatten)]
        spec: SpecArgs,
        /// Largest horizon for exhaustive enumeration.
        #[arg(long, default_value_t = oracle::DEFAULT_ENUMERATION_CAP)]
        cap: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Monte Carlo estimate of a strategy's win probability.
    Simulate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Threshold index; defaults to the optimal threshold.
        #[arg(long, conflicts_with_all = ["stop_set", "adaptive"])]
        threshold: Option<usize>,
        /// Explicit stop-set, comma separated (empty string for none).
        #[arg(long, value_delimiter = ',', conflicts_with = "adaptive")]
        stop_set: Option<Vec<String>>,
        /// Plug-in odds with a smoothed running-mean estimator.
        #[arg(long)]
        adaptive: bool,
        #[command(flatten)]
        out: OutputArgs,
    },
}

fn load_spec(args: &SpecArgs) -> Result<ProblemSpec, CliError> {
    if let Some(path) = &args.spec {
        let text = if path.as_os_str() == "-" {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf).map_err(|e| input(format!("stdin: {e}")))?;
            buf
        } else {
            std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?
        };
        return ProblemSpec::from_json(&text);
    }
    let kind = if let Some(p) = &args.p {
        SpecKind::Explicit { p: p.iter().map(|t| Literal::Text(t.trim().to_string())).collect() }
    } else if let Some(value) = &args.constant {
        SpecKind::Constant { value: Literal::Text(value.clone()), n: args.n }
    } else if args.secretary {
        SpecKind::Secretary { n: args.n }
    } else if let Some(sizes) = &args.group {
        SpecKind::Group { sizes: sizes.clone() }
    } else {
        return Err(input("no problem given: use --spec, --p, --constant, --secretary or --group"));
    };
    Ok(ProblemSpec { kind, mode: None })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Command output in both renderings.
pub struct Report {
    pub json: Value,
    pub text: String,
}

fn mode_name(mode: ArithmeticMode) -> &'static str {
    match mode {
        ArithmeticMode::ExactRational => "exact",
        ArithmeticMode::FloatingPoint => "float",
    }
}

fn fmt_value<T: Scalar>(v: &T) -> String {
    match T::MODE {
        ArithmeticMode::ExactRational => format!("{v} (~{:.6})", v.to_f64()),
        ArithmeticMode::FloatingPoint => format!("{:.6}", v.to_f64()),
    }
}

fn solve_report<T: Scalar>(spec: &ProblemSpec) -> Result<Report, CliError> {
    let problem: OddsProblem<T> = spec.problem()?;
    let tables = problem.suffix_tables();
    let s = tables.solve();
    let json = json!({
        "command": "solve",
        "mode": mode_name(T::MODE),
        "problem": spec.with_mode(T::MODE),
        "n": problem.len(),
        "threshold": s.threshold,
        "value": s.value.to_json(),
        "dual_threshold": s.dual_threshold,
        "degenerate": s.degenerate,
        "tail_odds_at_threshold": tables.r(s.threshold).to_json(),
        "profile": problem.unimodal_profile().iter().map(Scalar::to_json).collect::<Vec<_>>(),
    });
    let mut text = String::new();
    let _ = writeln!(text, "n = {}  ({} mode)", problem.len(), mode_name(T::MODE));
    let _ = writeln!(text, "s = {}", s.threshold);
    let _ = writeln!(text, "V = {}", fmt_value(&s.value));
    let _ = writeln!(text, "R(s,n) = {}", tables.r(s.threshold));
    if s.dual_threshold {
        let _ = writeln!(text, "dual threshold: s-1 = {} is optimal too", s.threshold - 1);
    }
    if s.degenerate {
        let _ = writeln!(text, "degenerate: Q(s,n) = 0, V = Q(s+1,n)");
    }
    Ok(Report { json, text })
}

fn sweep_range(spec: &ProblemSpec, range: RangeArgs) -> Result<(usize, usize), CliError> {
    let n_max = range
        .n_max
        .or_else(|| spec.natural_horizon())
        .ok_or_else(|| input("field `n_max`: required for this sequence (use --n-max)"))?;
    Ok((range.n_min, n_max))
}

fn sweep_report<T: Scalar>(spec: &ProblemSpec, range: RangeArgs) -> Result<Report, CliError> {
    let seq: UnderlyingSequence<T> = spec.sequence()?;
    let (n_min, n_max) = sweep_range(spec, range)?;
    let report = value_sweep(&seq, n_min, n_max)?;
    let classification = match classify_monotonicity(&report, &seq) {
        Ok(c) => Some(c),
        Err(FamilyError::PreconditionNotMet(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let rows: Vec<Value> = report
        .horizons()
        .map(|n| {
            let i = n - n_min;
            json!({
                "n": n,
                "threshold": report.thresholds[i],
                "value": report.values[i].to_json(),
                "degenerate": report.degenerate[i],
                "dual_threshold": report.dual_thresholds.contains(&n),
            })
        })
        .collect();
    let json = json!({
        "command": "sweep",
        "mode": mode_name(T::MODE),
        "problem": spec.with_mode(T::MODE),
        "n_min": n_min,
        "n_max": n_max,
        "n_star": report.n_star,
        "settled_from": report.settled_from,
        "monotonicity": report.monotonicity.to_string(),
        "classification": classification,
        "rows": rows,
        "coincidences": report.coincidences,
        "dual_thresholds": report.dual_thresholds,
    });
    let mut text = String::new();
    let _ = writeln!(text, "{:>6} {:>6}  V(n)", "n", "s(n)");
    for n in report.horizons() {
        let mark = if report.dual_thresholds.contains(&n) { "  (dual)" } else { "" };
        let _ = writeln!(text, "{n:>6} {:>6}  {}{mark}", report.threshold(n), fmt_value(report.value(n)));
    }
    let _ = writeln!(text, "N* = {}", report.n_star);
    let _ = writeln!(text, "V(n) behaviour: {}", report.monotonicity);
    let coincident: Vec<String> = report.coincidences.iter().map(|c| c.n.to_string()).collect();
    let _ = writeln!(text, "V(n+1) = V(n) at n = [{}]", coincident.join(", "));
    Ok(Report { json, text })
}

fn coincide_report<T: Scalar>(spec: &ProblemSpec, range: RangeArgs) -> Result<Report, CliError> {
    let seq: UnderlyingSequence<T> = spec.sequence()?;
    let (n_min, n_max) = match (range.n_max, &spec.kind) {
        (Some(n_max), _) => (range.n_min, n_max),
        (None, _) => {
            let horizon = spec
                .natural_horizon()
                .ok_or_else(|| input("field `n_max`: required for this sequence (use --n-max)"))?;
            // Coincidences compare n with n + 1.
            (range.n_min, horizon.saturating_sub(1).max(1))
        }
    };
    let coincidences = detect_coincidences(&seq, n_min, n_max)?;
    let uniqueness = uniqueness_report(&seq, n_min, n_max)?;
    let json = json!({
        "command": "coincide",
        "mode": mode_name(T::MODE),
        "problem": spec.with_mode(T::MODE),
        "n_min": n_min,
        "n_max": n_max,
        "criterion_applies": uniqueness.criterion,
        "coincidences": coincidences,
        "uniqueness": uniqueness.entries,
        "all_unique": uniqueness.all_unique(),
    });
    let mut text = String::new();
    let _ = writeln!(
        text,
        "criterion {}",
        if uniqueness.criterion { "applies (non-increasing, 0 < p < 1)" } else { "does not apply; direct comparison" }
    );
    if coincidences.is_empty() {
        let _ = writeln!(text, "no coincidences for {n_min} <= n <= {n_max}");
    }
    for c in &coincidences {
        let reasons: Vec<String> = c.reasons.iter().map(|r| format!("{r:?}")).collect();
        let _ = writeln!(text, "V({}) = V({}): {}", c.n + 1, c.n, reasons.join(", "));
    }
    let _ = writeln!(text, "all thresholds and values unique: {}", uniqueness.all_unique());
    Ok(Report { json, text })
}

fn secretary_report<T: Scalar>(n: usize, certificate: bool) -> Result<Report, CliError> {
    let problem: OddsProblem<T> = models::secretary_problem(n)?;
    let s = problem.solve();
    let mut json = json!({
        "command": "secretary",
        "mode": mode_name(T::MODE),
        "problem": ProblemSpec { kind: SpecKind::Secretary { n: Some(n) }, mode: None }.with_mode(T::MODE),
        "n": n,
        "threshold": s.threshold,
        "value": s.value.to_json(),
        "dual_threshold": s.dual_threshold,
    });
    let mut text = format!("n = {n}\ns = {}\nV = {}\n", s.threshold, fmt_value(&s.value));
    if certificate {
        let cert = models::secretary_certificate(n)?;
        let _ = writeln!(
            text,
            "certificate: V strictly decreasing and thresholds unique for 3 <= n <= {n}; V(2) = V(3): {}",
            cert.boundary_tie
        );
        json["certificate"] = serde_json::to_value(&cert).map_err(|e| input(e.to_string()))?;
    }
    Ok(Report { json, text })
}

fn schedule_report<T: Scalar>(
    total: u64,
    days: usize,
    prefix: &[u64],
    pool: Option<&[u64]>,
    cap: u64,
) -> Result<Report, CliError> {
    let completion = match pool {
        Some(p) => Completion::Pool(p.to_vec()),
        None => Completion::Free,
    };
    let best = best_schedule::<T>(total, days, prefix, &completion, cap)?;
    let sizes: Vec<String> = best.schedule.sizes().iter().map(u64::to_string).collect();
    let json = json!({
        "command": "schedule",
        "mode": mode_name(T::MODE),
        "total": total,
        "days": days,
        "prefix": prefix,
        "pool": pool,
        "schedule": best.schedule.sizes(),
        "value": best.value.to_json(),
        "threshold": best.threshold,
        "candidates": best.candidates,
        "maximizers": best.maximizers,
        "problem": ProblemSpec { kind: SpecKind::Group { sizes: best.schedule.sizes().to_vec() }, mode: None }
            .with_mode(T::MODE),
    });
    let text = format!(
        "schedule = ({})\nV = {}\nthreshold day = {}\ncandidates evaluated = {}, maximizers = {}\n",
        sizes.join(","),
        fmt_value(&best.value),
        best.threshold,
        best.candidates,
        best.maximizers
    );
    Ok(Report { json, text })
}

fn oracle_report<T: Scalar>(spec: &ProblemSpec, cap: usize) -> Result<Report, CliError> {
    let problem: OddsProblem<T> = spec.problem()?;
    let solution = problem.solve();
    let dp = oracle::dp_value(&problem);
    let enumeration = oracle::enumerate_stopsets(&problem, cap)?;
    let agree = solution.value.tie_eq(&dp.value)
        && solution.value.tie_eq(&enumeration.value)
        && enumeration.threshold_maximizer.is_some();
    let json = json!({
        "command": "oracle",
        "mode": mode_name(T::MODE),
        "problem": spec.with_mode(T::MODE),
        "solve": { "threshold": solution.threshold, "value": solution.value.to_json() },
        "dp": { "value": dp.value.to_json(), "stop_indices": dp.stop_indices() },
        "enumeration": {
            "value": enumeration.value.to_json(),
            "best": enumeration.best.indices(),
            "maximizers": enumeration.maximizers,
            "threshold_maximizer": enumeration.threshold_maximizer,
        },
        "agree": agree,
    });
    if !agree {
        return Err(CliError::Consistency(format!(
            "oracle disagreement: solve {}, dp {}, enumeration {}",
            solution.value, dp.value, enumeration.value
        )));
    }
    let text = format!(
        "solve:       s = {}, V = {}\nbackward DP: V = {}, stops at {:?}\nenumeration: V = {}, best set {:?}, {} maximizer(s)\nall agree\n",
        solution.threshold,
        fmt_value(&solution.value),
        fmt_value(&dp.value),
        dp.stop_indices(),
        fmt_value(&enumeration.value),
        enumeration.best.indices(),
        enumeration.maximizers,
    );
    Ok(Report { json, text })
}

#[derive(Debug, Clone)]
struct SimulateArgs {
    trials: u64,
    seed: u64,
    threshold: Option<usize>,
    stop_set: Option<Vec<String>>,
    adaptive: bool,
}

fn simulate_report<T: Scalar>(spec: &ProblemSpec, args: &SimulateArgs) -> Result<Report, CliError> {
    let problem: OddsProblem<T> = spec.problem()?;
    let optimum = problem.solve();
    let (strategy, label) = if args.adaptive {
        (Strategy::Adaptive(Arc::new(SmoothedMean)), json!("adaptive"))
    } else if let Some(list) = &args.stop_set {
        let indices = list
            .iter()
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<usize>().map_err(|_| input(format!("field `stop-set`: bad index {t:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let set = StopSet::new(problem.len(), indices)?;
        let label = json!({ "stop_set": set.indices() });
        (Strategy::StopSet(set), label)
    } else {
        let s = args.threshold.unwrap_or(optimum.threshold);
        (Strategy::Threshold(s), json!({ "threshold": s }))
    };
    let config = SimConfig::new(args.trials, args.seed, strategy);
    let mut json = json!({
        "command": "simulate",
        "mode": mode_name(T::MODE),
        "problem": spec.with_mode(T::MODE),
        "strategy": label,
        "seed": args.seed,
        "optimal_value": optimum.value.to_json(),
    });
    let result = if args.adaptive {
        let p: Vec<f64> = problem.probabilities().iter().map(Scalar::to_f64).collect();
        let adaptive = sim::adaptive_simulate(&p, &config)?;
        json["gap"] = json!(adaptive.gap);
        adaptive.result
    } else {
        sim::simulate(&problem, &config)?
    };
    json["result"] = serde_json::to_value(&result).map_err(|e| input(e.to_string()))?;
    let text = format!(
        "trials = {}, wins = {}\nestimate = {:.6} +/- {:.6} (95%)\noptimal V = {}\n",
        result.trials,
        result.wins,
        result.estimate,
        result.half_width,
        fmt_value(&optimum.value)
    );
    Ok(Report { json, text })
}

fn execute(command: Command) -> Result<(Report, bool), CliError> {
    macro_rules! by_mode {
        ($exact:expr, $f:ident ( $($arg:expr),* )) => {
            if $exact { $f::<Rational>($($arg),*) } else { $f::<f64>($($arg),*) }
        };
    }
    match command {
        Command::Solve { spec, out } => {
            let ps = load_spec(&spec)?;
            Ok((by_mode!(ps.is_exact(spec.exact), solve_report(&ps))?, out.json))
        }
        Command::Sweep { spec, range, out } => {
            let ps = load_spec(&spec)?;
            Ok((by_mode!(ps.is_exact(spec.exact), sweep_report(&ps, range))?, out.json))
        }
        Command::Coincide { spec, range, out } => {
            let ps = load_spec(&spec)?;
            Ok((by_mode!(ps.is_exact(spec.exact), coincide_report(&ps, range))?, out.json))
        }
        Command::Secretary { n, exact, certificate, out } => {
            if certificate && !exact {
                return Err(input("--certificate requires --exact"));
            }
            Ok((by_mode!(exact, secretary_report(n, certificate))?, out.json))
        }
        Command::Schedule { total, days, prefix, pool, cap, exact, out } => {
            let pool = pool.as_deref();
            Ok((by_mode!(exact, schedule_report(total, days, &prefix, pool, cap))?, out.json))
        }
        Command::Oracle { spec, cap, out } => {
            let ps = load_spec(&spec)?;
            Ok((by_mode!(ps.is_exact(spec.exact), oracle_report(&ps, cap))?, out.json))
        }
        Command::Simulate { spec, trials, seed, threshold, stop_set, adaptive, out } => {
            let ps = load_spec(&spec)?;
            let args = SimulateArgs { trials, seed, threshold, stop_set, adaptive };
            Ok((by_mode!(ps.is_exact(spec.exact), simulate_report(&ps, &args))?, out.json))
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = write!(err, "{e}");
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => 1,
            };
        }
    };
    let outcome = match cli.workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(|| execute(cli.command)),
            Err(e) => Err(input(format!("--workers: {e}"))),
        },
        None => execute(cli.command),
    };
    match outcome {
        Ok((report, as_json)) => {
            let written = if as_json {
                serde_json::to_string_pretty(&report.json)
                    .map_err(std::io::Error::other)
                    .and_then(|s| writeln!(out, "{s}"))
            } else {
                write!(out, "{}", report.text)
            };
            match written {
                Ok(()) => 0,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    1
                }
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("odds").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn spec_documents_parse() {
        let s = ProblemSpec::from_json(r#"{"kind":"explicit","p":["0.1","1/3",0.25]}"#).unwrap();
        assert!(s.is_exact(false));
        let p: OddsProblem<Rational> = s.problem().unwrap();
        assert_eq!(p.len(), 3);

        let s = ProblemSpec::from_json(r#"{"kind":"constant","value":0.5,"n":4,"mode":"float"}"#).unwrap();
        assert!(!s.is_exact(false));
        assert_eq!(s.problem::<f64>().unwrap().probabilities(), &[0.5; 4]);

        let s = ProblemSpec::from_json(r#"{"kind":"group","sizes":[3,3,4,3,2]}"#).unwrap();
        assert_eq!(s.problem::<f64>().unwrap().len(), 5);

        assert!(ProblemSpec::from_json(r#"{"kind":"nope"}"#).is_err());
        assert!(ProblemSpec::from_json("not json").is_err());
    }

    #[test]
    fn spec_errors_name_the_field() {
        let s = ProblemSpec::from_json(r#"{"kind":"explicit","p":[0.5, 1.3]}"#).unwrap();
        let e = s.problem::<f64>().unwrap_err();
        assert!(e.message().contains("p[2]"), "{}", e.message());
        let s = ProblemSpec::from_json(r#"{"kind":"explicit","p":[0.5, "x"]}"#).unwrap();
        assert!(s.problem::<f64>().unwrap_err().message().contains("p[2]"));
        let s = ProblemSpec::from_json(r#"{"kind":"secretary"}"#).unwrap();
        assert!(s.problem::<f64>().unwrap_err().message().contains("`n`"));
    }

    #[test]
    fn solve_inline() {
        let (code, out, _) = run_args(&["solve", "--p", "0.1,0.2,0.24,0.25,0.251"]);
        assert_eq!(code, 0);
        assert!(out.contains("s = 2"));
        assert!(out.contains("V = 0.4215"));
    }

    #[test]
    fn consistency_failures_exit_two() {
        let e: CliError = FamilyError::InconsistentWithTheorem { n: 4, detail: "x".into() }.into();
        assert_eq!(e.exit_code(), 2);
        let e: CliError = ModelError::CertificateFailure { n: 9, reason: "x".into() }.into();
        assert_eq!(e.exit_code(), 2);
        let e: CliError = FamilyError::InvalidRange { n_min: 3, n_max: 1 }.into();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_args(&["solve"]).0, 1);
        assert_eq!(run_args(&["bogus"]).0, 1);
        assert_eq!(run_args(&["solve", "--p", "0.5,1.3"]).0, 1);
        assert_eq!(run_args(&["secretary", "--n", "5", "--certificate"]).0, 1);
        assert_eq!(run_args(&["--help"]).0, 0);
    }
}
