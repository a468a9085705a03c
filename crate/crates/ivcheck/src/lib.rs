//! Falsification tests for the binary (and discrete) instrumental variable
//! model.
//!
//! The observable law of a binary instrumental variable model is constrained
//! by four inequalities of the form
//!
//! ```text
//! pr(D=d, Y=y | Z=1) + pr(D=d, Y=1-y | Z=0) <= 1,    d=0,1, y=0,1.
//! ```
//!
//! Each inequality is equivalent to a one-sided comparison of two binomial
//! proportions, so it can be tested with standard 2x2 machinery (Wald,
//! Fisher--Boschloo, Berger--Boos). Because the four left-hand sides sum to
//! exactly 2, at most two inequalities can be active at once, and testing
//! each at level alpha/2 yields an overall level-alpha procedure.
//!
//! Crate layout:
//! - [`tabulate`]: unit-level CSV ingestion, median dichotomization, and
//!   stratified contingency tables.
//! - [`ineq`]: the inequality statistics, the derived 2x2 tables, the
//!   octahedron geometry of the null space, and ACDE bounds.
//! - [`tests2x2`]: one-sided tests of `p1 <= p0` for a 2x2 table.
//! - [`gail_simon`]: the one-sided chi-bar-squared qualitative interaction
//!   test used for the conditional model.
//! - [`falsify`]: orchestration of the full procedures and report types.
//! - [`simlab`]: data-generating processes and a seeded Monte Carlo harness
//!   for size/power verification.

pub mod error;
pub mod falsify;
pub mod gail_simon;
pub mod ineq;
pub mod simlab;
pub mod tabulate;
pub mod tests2x2;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
