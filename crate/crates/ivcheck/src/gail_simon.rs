//! One-sided chi-bar-squared test that a difference of proportions is
//! non-positive in every stratum, against the alternative that it is
//! positive in at least one.
//!
//! The statistic sums the squared standardized differences over strata
//! where the estimate is positive. Its null distribution at the least
//! favorable point (all differences zero) is a mixture of chi-squared
//! distributions with binomial weights, which yields the p-value in closed
//! form.

use serde::Serialize;
use statrs::function::gamma::gamma_ur;

use crate::ineq::{q_table, DeltaEstimate};
use crate::tabulate::{StratifiedCounts, StratumKey};
use crate::{Error, Result};

/// Per-stratum standardized difference for one inequality.
///
/// `delta` is `None` when the stratum has an empty arm and contributes no
/// information. `se_corrected` records that a boundary proportion forced
/// the continuity correction of the standard error.
#[derive(Debug, Clone, Serialize)]
pub struct StratumDelta {
    pub key: StratumKey,
    pub delta: Option<DeltaEstimate>,
    pub se_corrected: bool,
}

/// Result of the chi-bar-squared test.
#[derive(Debug, Clone, Serialize)]
pub struct GsResult {
    /// Sum of squared positive standardized differences.
    pub q_plus: f64,
    /// Number of strata that entered the statistic.
    pub k_used: usize,
    /// Keys of strata dropped for having an empty arm.
    pub dropped: Vec<StratumKey>,
    pub p_value: f64,
}

fn corrected_delta(x1: u64, n1: u64, x0: u64, n0: u64) -> (DeltaEstimate, bool) {
    let (p1, p0) = (x1 as f64 / n1 as f64, x0 as f64 / n0 as f64);
    let estimate = p1 - p0;
    let boundary = |p: f64| p == 0.0 || p == 1.0;
    let corrected = boundary(p1) || boundary(p0);
    let (v1, v0) = if corrected {
        // Add 0.5 to every cell when estimating the variance; the point
        // estimate keeps the raw proportions.
        let q1 = (x1 as f64 + 0.5) / (n1 as f64 + 1.0);
        let q0 = (x0 as f64 + 0.5) / (n0 as f64 + 1.0);
        (
            q1 * (1.0 - q1) / (n1 as f64 + 1.0),
            q0 * (1.0 - q0) / (n0 as f64 + 1.0),
        )
    } else {
        (p1 * (1.0 - p1) / n1 as f64, p0 * (1.0 - p0) / n0 as f64)
    };
    (
        DeltaEstimate {
            estimate,
            se: (v1 + v0).sqrt(),
            n1,
            n0,
        },
        corrected,
    )
}

/// Standardized differences of the inequality `(d, y)` for each stratum of
/// a grouped table, in the deterministic key order of the grouping.
pub fn stratum_deltas(
    strata: &StratifiedCounts,
    d: usize,
    y: usize,
) -> Result<Vec<StratumDelta>> {
    let mut out = Vec::new();
    for (key, counts) in &strata.strata {
        counts.require_binary()?;
        if counts.arm_total(0) == 0 || counts.arm_total(1) == 0 {
            out.push(StratumDelta {
                key: key.clone(),
                delta: None,
                se_corrected: false,
            });
            continue;
        }
        let q = q_table(counts, d, y)?;
        let (delta, se_corrected) = corrected_delta(q.x1, q.n1, q.x0, q.n0);
        out.push(StratumDelta {
            key: key.clone(),
            delta: Some(delta),
            se_corrected,
        });
    }
    Ok(out)
}

/// Upper tail of the chi-bar-squared mixture with `k` components at `q`:
/// the null probability that the statistic is at least `q`.
///
/// Mixture weights are binomial(`k`, 1/2); the zero-degrees component is a
/// point mass at zero, so the tail is 1 exactly when `q` is zero.
pub fn chi_bar_sq_tail(q: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parameter("chi_bar_sq_tail needs k >= 1".into()));
    }
    if !q.is_finite() || q < 0.0 {
        return Err(Error::Parameter(format!(
            "chi_bar_sq_tail needs a finite q >= 0, got {q}"
        )));
    }
    if q == 0.0 {
        return Ok(1.0);
    }
    let kf = k as f64;
    let ln2 = std::f64::consts::LN_2;
    let mut ln_w = -kf * ln2; // ln C(k, 0) - k ln 2
    let mut p = 0.0;
    for j in 1..=k {
        // ln C(k, j) = ln C(k, j - 1) + ln((k - j + 1) / j)
        ln_w += ((kf - j as f64 + 1.0) / j as f64).ln();
        p += ln_w.exp() * gamma_ur(j as f64 / 2.0, q / 2.0);
    }
    Ok(p.min(1.0))
}

/// Chi-bar-squared test over precomputed stratum differences. Strata with
/// no estimate are dropped; at least one usable stratum is required.
///
/// A usable stratum with a positive estimate and zero standard error makes
/// the statistic infinite and the p-value zero.
pub fn gs_test_deltas(deltas: &[StratumDelta]) -> Result<GsResult> {
    let mut usable: Vec<&DeltaEstimate> = Vec::new();
    let mut dropped = Vec::new();
    for s in deltas {
        match s.delta.as_ref() {
            Some(d) => usable.push(d),
            None => dropped.push(s.key.clone()),
        }
    }
    if usable.is_empty() {
        return Err(Error::NoUsableStrata);
    }
    // Fold from +0.0: an empty f64 `sum()` yields IEEE -0.0, which would leak
    // a negative sign into reports for a statistic that is nonnegative.
    let q_plus: f64 = usable
        .iter()
        .filter(|d| d.estimate > 0.0)
        .map(|d| (d.estimate / d.se).powi(2))
        .fold(0.0, |acc, t| acc + t);
    let p_value = if q_plus.is_infinite() {
        0.0
    } else {
        chi_bar_sq_tail(q_plus, usable.len())?
    };
    Ok(GsResult {
        q_plus,
        k_used: usable.len(),
        dropped,
        p_value,
    })
}

/// Chi-bar-squared test of the inequality `(d, y)` across the strata of a
/// grouped table.
pub fn gs_test(strata: &StratifiedCounts, d: usize, y: usize) -> Result<GsResult> {
    gs_test_deltas(&stratum_deltas(strata, d, y)?)
}
