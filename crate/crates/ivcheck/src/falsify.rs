//! Falsification procedures and their reports.
//!
//! Every procedure tests a family of one-sided inequality hypotheses and
//! rejects the instrumental variable model when any member rejects. Local
//! levels are chosen so the overall size is at most `alpha`: in the binary
//! unconditional model each of the four inequalities runs at `alpha / 2`
//! (at most two constraints can be active at once), the chi-bar-squared
//! conditional test runs each inequality at `alpha / 4`, per-stratum
//! testing runs each (stratum, inequality) pair at `alpha / (2 K)`, and the
//! discrete model runs each (z-pair, d) hypothesis at `alpha / (L (L - 1))`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::gail_simon::gs_test;
use crate::ineq::{acde_bounds, q_table, AcdeInterval, TwoByTwo, INEQ_INDICES};
use crate::tabulate::{JointCounts, StratifiedCounts, StratumKey};
use crate::tests2x2::{run_test, TestMethod};
use crate::{Error, Result};

/// Version tag embedded in serialized reports.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Which falsification procedure produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Unconditional,
    ConditionalGs,
    ConditionalPerLevel,
    Discrete,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Model::Unconditional => write!(f, "unconditional"),
            Model::ConditionalGs => write!(f, "conditional (chi-bar-squared)"),
            Model::ConditionalPerLevel => write!(f, "conditional (per-stratum)"),
            Model::Discrete => write!(f, "discrete"),
        }
    }
}

/// Identifier of one tested inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IneqId {
    /// `p(D=d, Y=y | Z=1) + p(D=d, Y=1-y | Z=0) <= 1`.
    Binary { d: usize, y: usize },
    /// `p(Y=0, D=d | Z=z1) + p(Y=1, D=d | Z=z2) <= 1`.
    Discrete { z1: usize, z2: usize, d: usize },
}

impl std::fmt::Display for IneqId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IneqId::Binary { d, y } => write!(f, "(d={d}, y={y})"),
            IneqId::Discrete { z1, z2, d } => write!(f, "(z1={z1}, z2={z2}, d={d})"),
        }
    }
}

/// One tested hypothesis.
///
/// `statistic` is the estimated inequality statistic (which the model
/// requires to be at most 1) for single-table tests, or the chi-bar-squared
/// statistic for the conditional test. `p_value` is `None` when the
/// hypothesis was skipped for lack of data.
#[derive(Debug, Clone, Serialize)]
pub struct Entry {
    pub id: IneqId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stratum: Option<StratumKey>,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub level: f64,
    pub reject: bool,
}

/// Sign conclusion for the average controlled direct effect at `D = d`.
///
/// Rejecting `(d, y=1)` implies the effect is positive for some units in
/// some stratum; rejecting `(d, y=0)` implies it is negative. Conditional
/// models can support both at once (in different strata).
#[derive(Debug, Clone, Serialize)]
pub struct AcdeConclusion {
    pub d: usize,
    pub positive: bool,
    pub negative: bool,
    /// Plug-in interval, available only for a single unstratified table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<AcdeInterval>,
}

/// Outcome of a falsification procedure.
#[derive(Debug, Clone, Serialize)]
pub struct FalsifyReport {
    pub schema_version: u32,
    pub model: Model,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<TestMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub alpha: f64,
    pub levels_z: usize,
    pub levels_d: usize,
    /// Number of strata that entered the procedure.
    pub k_strata: usize,
    /// Strata dropped for having an empty instrument arm.
    pub dropped_strata: usize,
    pub entries: Vec<Entry>,
    pub falsified: bool,
    pub acde: Vec<AcdeConclusion>,
    pub warnings: Vec<String>,
}

impl FalsifyReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text rendering: one row per hypothesis, then the overall
    /// verdict and effect-direction conclusions.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let method = self
            .method
            .map(|m| format!(", method = {m}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "Falsification test: {} model{}, alpha = {}",
            self.model, method, self.alpha
        );
        if self.k_strata > 1 || self.dropped_strata > 0 {
            let _ = writeln!(
                out,
                "Strata: {} used, {} dropped",
                self.k_strata, self.dropped_strata
            );
        }
        let label = |e: &Entry| match &e.stratum {
            Some(key) if !key.is_empty() => format!("{} [{}]", e.id, key.join(", ")),
            _ => e.id.to_string(),
        };
        let width = self
            .entries
            .iter()
            .map(|e| label(e).len())
            .max()
            .unwrap_or(10)
            .max("inequality".len());
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>8}  {:>8}  reject",
            "inequality", "statistic", "p-value", "level"
        );
        for e in &self.entries {
            let stat = e
                .statistic
                .map(|s| format!("{s:9.3}"))
                .unwrap_or_else(|| format!("{:>9}", "-"));
            let p = e
                .p_value
                .map(|p| format!("{p:8.3}"))
                .unwrap_or_else(|| format!("{:>8}", "skipped"));
            let _ = writeln!(
                out,
                "{:<width$}  {}  {}  {:8.4}  {}",
                label(e),
                stat,
                p,
                e.level,
                if e.reject { "yes" } else { "no" }
            );
        }
        let _ = writeln!(
            out,
            "Overall: {}",
            if self.falsified {
                "falsified (at least one inequality rejected)"
            } else {
                "not falsified (no inequality rejected)"
            }
        );
        for a in &self.acde {
            let direction = match (a.positive, a.negative) {
                (true, true) => "both signs across strata".to_string(),
                (true, false) => "positive for some units".to_string(),
                (false, true) => "negative for some units".to_string(),
                (false, false) => "undetermined".to_string(),
            };
            let bounds = a
                .bounds
                .map(|b| format!(" (plug-in bounds [{:.3}, {:.3}])", b.lower, b.upper))
                .unwrap_or_default();
            let _ = writeln!(out, "Direct effect of Z on Y at D={}: {direction}{bounds}", a.d);
        }
        for w in &self.warnings {
            let _ = writeln!(out, "Warning: {w}");
        }
        out.push_str(
            "Note: not rejecting does not certify instrument validity; these \
             tests can only detect distributions that no valid instrument \
             model could produce.\n",
        );
        out
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

fn check_gamma(method: TestMethod, gamma: Option<f64>, level: f64) -> Result<()> {
    match (method, gamma) {
        (TestMethod::BergerBoos, Some(g)) if g >= level => Err(Error::Parameter(format!(
            "berger_boos gamma ({g}) must be below the local level ({level})"
        ))),
        (TestMethod::BergerBoos, None) => {
            Err(Error::Parameter("berger_boos requires a gamma".into()))
        }
        (m, Some(_)) if m != TestMethod::BergerBoos => Err(Error::Parameter(format!(
            "gamma is only meaningful for berger_boos, not {m}"
        ))),
        _ => Ok(()),
    }
}

/// ACDE conclusions implied by the rejected binary inequalities.
fn acde_from_entries(entries: &[Entry], bounds: Option<&JointCounts>) -> Vec<AcdeConclusion> {
    (0..2)
        .map(|d| {
            let rejected = |y: usize| {
                entries
                    .iter()
                    .any(|e| e.reject && e.id == IneqId::Binary { d, y })
            };
            AcdeConclusion {
                d,
                positive: rejected(1),
                negative: rejected(0),
                bounds: bounds.and_then(|t| acde_bounds(t, d).ok()),
            }
        })
        .collect()
}

/// Test the binary unconditional model: each of the four inequalities at
/// level `alpha / 2`.
pub fn test_unconditional(
    table: &JointCounts,
    alpha: f64,
    method: TestMethod,
    gamma: Option<f64>,
) -> Result<FalsifyReport> {
    check_alpha(alpha)?;
    let level = alpha / 2.0;
    check_gamma(method, gamma, level)?;
    let mut entries = Vec::new();
    for (d, y) in INEQ_INDICES {
        let q = q_table(table, d, y)?;
        let r = run_test(&q, method, gamma)?;
        entries.push(Entry {
            id: IneqId::Binary { d, y },
            stratum: None,
            statistic: Some(crate::ineq::u_stat(table, d, y)?),
            p_value: Some(r.p_value),
            level,
            reject: r.p_value <= level,
        });
    }
    let falsified = entries.iter().any(|e| e.reject);
    let acde = acde_from_entries(&entries, Some(table));
    Ok(FalsifyReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model: Model::Unconditional,
        method: Some(method),
        gamma,
        alpha,
        levels_z: table.levels_z(),
        levels_d: table.levels_d(),
        k_strata: 1,
        dropped_strata: 0,
        entries,
        falsified,
        acde,
        warnings: Vec::new(),
    })
}

/// Test the binary conditional model with the chi-bar-squared statistic:
/// each inequality, pooled over strata, at level `alpha / 4`.
pub fn test_conditional_gs(strat: &StratifiedCounts, alpha: f64) -> Result<FalsifyReport> {
    check_alpha(alpha)?;
    if strat.strata.is_empty() {
        return Err(Error::EmptyInput("conditional test needs strata"));
    }
    let level = alpha / 4.0;
    let mut entries = Vec::new();
    let mut dropped = 0;
    let mut warnings = Vec::new();
    let mut unevaluable = false;
    for (d, y) in INEQ_INDICES {
        match gs_test(strat, d, y) {
            Ok(r) => {
                dropped = r.dropped.len();
                entries.push(Entry {
                    id: IneqId::Binary { d, y },
                    stratum: None,
                    statistic: Some(r.q_plus),
                    p_value: Some(r.p_value),
                    level,
                    reject: r.p_value <= level,
                });
            }
            // An empty arm disables a stratum for every inequality alike,
            // so this arm is all-or-nothing across the four hypotheses.
            Err(Error::NoUsableStrata) => {
                unevaluable = true;
                dropped = strat.stratum_count();
                entries.push(Entry {
                    id: IneqId::Binary { d, y },
                    stratum: None,
                    statistic: None,
                    p_value: None,
                    level,
                    reject: false,
                });
            }
            Err(e) => return Err(e),
        }
    }
    if unevaluable {
        warnings.push(
            "every stratum has an empty instrument arm; nothing could be tested".to_string(),
        );
    } else if dropped > 0 {
        warnings.push(format!(
            "{dropped} stratum(s) with an empty instrument arm contributed no information"
        ));
    }
    let falsified = entries.iter().any(|e| e.reject);
    let acde = acde_from_entries(&entries, None);
    let any = strat.strata.values().next().expect("nonempty strata");
    Ok(FalsifyReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model: Model::ConditionalGs,
        method: None,
        gamma: None,
        alpha,
        levels_z: any.levels_z(),
        levels_d: any.levels_d(),
        k_strata: strat.stratum_count() - dropped,
        dropped_strata: dropped,
        entries,
        falsified,
        acde,
        warnings,
    })
}

/// Test the binary conditional model stratum by stratum: each of the four
/// inequalities in each of the `K` usable strata at level `alpha / (2 K)`.
pub fn test_conditional_perlevel(
    strat: &StratifiedCounts,
    alpha: f64,
    method: TestMethod,
    gamma: Option<f64>,
) -> Result<FalsifyReport> {
    check_alpha(alpha)?;
    if strat.strata.is_empty() {
        return Err(Error::EmptyInput("conditional test needs strata"));
    }
    let usable: Vec<(&StratumKey, &JointCounts)> = strat
        .strata
        .iter()
        .filter(|(_, t)| t.arm_total(0) > 0 && t.arm_total(1) > 0)
        .collect();
    if usable.is_empty() {
        return Err(Error::NoUsableStrata);
    }
    let dropped = strat.stratum_count() - usable.len();
    let level = alpha / (2.0 * usable.len() as f64);
    check_gamma(method, gamma, level)?;
    let mut entries = Vec::new();
    for (key, table) in &usable {
        for (d, y) in INEQ_INDICES {
            let q = q_table(table, d, y)?;
            let r = run_test(&q, method, gamma)?;
            entries.push(Entry {
                id: IneqId::Binary { d, y },
                stratum: Some((*key).clone()),
                statistic: Some(crate::ineq::u_stat(table, d, y)?),
                p_value: Some(r.p_value),
                level,
                reject: r.p_value <= level,
            });
        }
    }
    let mut warnings = Vec::new();
    if dropped > 0 {
        warnings.push(format!(
            "{dropped} stratum(s) with an empty instrument arm were skipped"
        ));
    }
    let falsified = entries.iter().any(|e| e.reject);
    let acde = acde_from_entries(&entries, None);
    let any = usable[0].1;
    Ok(FalsifyReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model: Model::ConditionalPerLevel,
        method: Some(method),
        gamma,
        alpha,
        levels_z: any.levels_z(),
        levels_d: any.levels_d(),
        k_strata: usable.len(),
        dropped_strata: dropped,
        entries,
        falsified,
        acde,
        warnings,
    })
}

/// The 2x2 table comparing `p(Y=0, D=d | z1) + p(Y=1, D=d | z2)` to 1.
///
/// Both arms of the pair yield an equivalent table; the orientation is
/// canonicalized so the higher instrument level is the success arm, which
/// makes the binary reduction reproduce [`q_table`] cell for cell.
pub fn discrete_q_table(
    table: &JointCounts,
    z1: usize,
    z2: usize,
    d: usize,
) -> Result<TwoByTwo> {
    let (n_z1, n_z2) = (table.arm_total(z1), table.arm_total(z2));
    if n_z1 == 0 {
        return Err(Error::EmptyArm(z1));
    }
    if n_z2 == 0 {
        return Err(Error::EmptyArm(z2));
    }
    if z2 > z1 {
        TwoByTwo::new(table.count(z2, d, 1), n_z2, n_z1 - table.count(z1, d, 0), n_z1)
    } else {
        TwoByTwo::new(table.count(z1, d, 0), n_z1, n_z2 - table.count(z2, d, 1), n_z2)
    }
}

/// Test the discrete model with `L` instrument levels and `M` treatment
/// levels: for every ordered pair `z1 != z2` and every `d`, the hypothesis
/// `p(Y=0, D=d | z1) + p(Y=1, D=d | z2) <= 1` at level `alpha / (L (L-1))`.
///
/// Pairs touching an empty instrument arm are skipped with a warning.
pub fn test_discrete(
    table: &JointCounts,
    alpha: f64,
    method: TestMethod,
    gamma: Option<f64>,
) -> Result<FalsifyReport> {
    check_alpha(alpha)?;
    let (l, m) = (table.levels_z(), table.levels_d());
    let level = alpha / (l * (l - 1)) as f64;
    check_gamma(method, gamma, level)?;
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for z1 in 0..l {
        for z2 in 0..l {
            if z1 == z2 {
                continue;
            }
            for d in 0..m {
                let id = IneqId::Discrete { z1, z2, d };
                match discrete_q_table(table, z1, z2, d) {
                    Ok(q) => {
                        let r = run_test(&q, method, gamma)?;
                        let u = table.prop(z1, d, 0)? + table.prop(z2, d, 1)?;
                        entries.push(Entry {
                            id,
                            stratum: None,
                            statistic: Some(u),
                            p_value: Some(r.p_value),
                            level,
                            reject: r.p_value <= level,
                        });
                    }
                    Err(Error::EmptyArm(z)) => {
                        if d == 0 && !warnings.iter().any(|w: &String| w.contains(&format!("arm {z} "))) {
                            warnings.push(format!(
                                "instrument arm {z} is empty; its pairs were skipped"
                            ));
                        }
                        entries.push(Entry {
                            id,
                            stratum: None,
                            statistic: None,
                            p_value: None,
                            level,
                            reject: false,
                        });
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    let falsified = entries.iter().any(|e| e.reject);
    Ok(FalsifyReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model: Model::Discrete,
        method: Some(method),
        gamma,
        alpha,
        levels_z: l,
        levels_d: m,
        k_strata: 1,
        dropped_strata: 0,
        entries,
        falsified,
        acde: Vec::new(),
        warnings,
    })
}
