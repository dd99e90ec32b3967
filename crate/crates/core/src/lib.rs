//! Optimal stopping on the last success with the odds-algorithm.
//!
//! * [`odds`]: thresholds and optimal values for a fixed horizon.
//! * [`family`]: how thresholds and values evolve as the horizon grows.
//! * [`oracle`]: brute-force certificates (backward induction, stop-set enumeration).
//! * [`models`]: secretary problem with exact harmonic arithmetic, group interviews.
//! * [`sim`]: seeded Monte Carlo checks, including plug-in estimated odds.
//! * [`cli`]: the `odds` command-line front end.

pub mod cli;
pub mod family;
pub mod models;
pub mod odds;
pub mod oracle;
pub mod scalar;
pub mod sim;

pub use family::{FamilyReport, NStar, UnderlyingSequence};
pub use odds::{build_problem, Odds, OddsProblem, ProblemError, SuffixTables, ThresholdSolution};
pub use oracle::StopSet;
pub use scalar::{ArithmeticMode, Rational, Scalar};
