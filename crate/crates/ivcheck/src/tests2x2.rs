//! One-sided tests of `H0: p1 <= p0` against `Ha: p1 > p0` for a
//! [`TwoByTwo`] table.
//!
//! Three methods are provided: the asymptotic Wald test with unpooled
//! variance, the exact unconditional Fisher--Boschloo test (Fisher p-value
//! as ordering statistic, supremum of the rejection probability over the
//! common nuisance success probability), and the Berger--Boos refinement
//! that restricts the supremum to a Clopper--Pearson confidence set for the
//! nuisance and adds its level `gamma` to the p-value.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::ineq::TwoByTwo;
use crate::{Error, Result};

/// Grid step for the nuisance supremum search.
const GRID_STEP: f64 = 1e-4;
/// Width at which golden-section refinement of the supremum stops.
const REFINE_WIDTH: f64 = 1e-7;
/// Absolute slack for tie grouping of Fisher p-values inside the Boschloo
/// ordering; ties are included ("<= observed").
const TIE_EPS: f64 = 1e-12;

/// Which test produced a [`TestResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Wald,
    Boschloo,
    BergerBoos,
}

impl std::fmt::Display for TestMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestMethod::Wald => write!(f, "wald"),
            TestMethod::Boschloo => write!(f, "boschloo"),
            TestMethod::BergerBoos => write!(f, "berger_boos"),
        }
    }
}

/// Outcome of a one-sided 2x2 test.
///
/// `statistic` is method-specific: the Wald z-statistic, or the observed
/// Fisher p-value used as the ordering statistic by the exact tests.
/// `gamma` is zero except for Berger--Boos.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub p_value: f64,
    pub statistic: f64,
    pub method: TestMethod,
    pub gamma: f64,
}

/// One-sided Wald test with unpooled binomial variances.
///
/// Degenerate tables (zero standard error) keep one-sided semantics:
/// `p = 1` when the point estimate is not positive, `p = 0` when both arms
/// are degenerate in opposite directions.
pub fn wald_one_sided(t: &TwoByTwo) -> TestResult {
    let (p1, p0) = (t.p1(), t.p0());
    let se = (p1 * (1.0 - p1) / t.n1 as f64 + p0 * (1.0 - p0) / t.n0 as f64).sqrt();
    let (statistic, p_value) = if se == 0.0 {
        if p1 > p0 {
            (f64::INFINITY, 0.0)
        } else {
            (f64::NEG_INFINITY, 1.0)
        }
    } else {
        let w = (p1 - p0) / se;
        let normal = Normal::standard();
        (w, normal.cdf(-w))
    };
    TestResult {
        p_value,
        statistic,
        method: TestMethod::Wald,
        gamma: 0.0,
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// One-sided Fisher p-value: the upper-tail hypergeometric probability of
/// `x1` or more arm-1 successes, conditioning on the margin `x1 + x0`.
pub fn fisher_one_sided(t: &TwoByTwo) -> f64 {
    let s = t.x1 + t.x0;
    let lo = s.saturating_sub(t.n0);
    let hi = s.min(t.n1);
    let ln_denom = ln_choose(t.n1 + t.n0, s);
    let mut p = 0.0;
    for k in t.x1.max(lo)..=hi {
        p += (ln_choose(t.n1, k) + ln_choose(t.n0, s - k) - ln_denom).exp();
    }
    p.min(1.0)
}

/// Fisher p-values for every table with fixed arm sizes, plus the log
/// binomial coefficients needed to turn a rejection set into tail
/// probabilities.
struct FisherTable {
    n1: u64,
    n0: u64,
    /// Indexed `x1 * (n0 + 1) + x0`.
    fp: Vec<f64>,
    lnc1: Vec<f64>,
    lnc0: Vec<f64>,
}

impl FisherTable {
    fn new(n1: u64, n0: u64) -> Self {
        let (w1, w0) = (n1 as usize + 1, n0 as usize + 1);
        let lnc1: Vec<f64> = (0..w1).map(|k| ln_choose(n1, k as u64)).collect();
        let lnc0: Vec<f64> = (0..w0).map(|k| ln_choose(n0, k as u64)).collect();
        let mut fp = vec![1.0; w1 * w0];
        // One margin at a time: hypergeometric pmf by recurrence, then
        // suffix sums give the upper-tail p for every k on that margin.
        for s in 0..=(n1 + n0) {
            let lo = s.saturating_sub(n0);
            let hi = s.min(n1);
            let ln_denom = ln_choose(n1 + n0, s);
            let mut pmf = Vec::with_capacity((hi - lo + 1) as usize);
            let mut v = (lnc1[lo as usize] + ln_choose(n0, s - lo) - ln_denom).exp();
            pmf.push(v);
            for k in lo..hi {
                let num = (n1 - k) as f64 * (s - k) as f64;
                let den = (k + 1) as f64 * (n0 + k + 1 - s) as f64;
                v *= num / den;
                pmf.push(v);
            }
            let mut tail = 0.0;
            let mut k = hi;
            loop {
                tail += pmf[(k - lo) as usize];
                fp[(k * (n0 + 1) + (s - k)) as usize] = tail.min(1.0);
                if k == lo {
                    break;
                }
                k -= 1;
            }
        }
        FisherTable {
            n1,
            n0,
            fp,
            lnc1,
            lnc0,
        }
    }

    fn fp(&self, x1: u64, x0: u64) -> f64 {
        self.fp[(x1 * (self.n0 + 1) + x0) as usize]
    }

    /// Log coefficients `ln c_s` of the rejection-set tail probability,
    /// grouped by total successes `s`: the tail at nuisance `pi` is
    /// `sum_s exp(ln c_s + s ln pi + (N - s) ln(1 - pi))`.
    fn reject_coeffs(&self, threshold: f64) -> Vec<f64> {
        let n = (self.n1 + self.n0) as usize;
        let mut terms: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
        for x1 in 0..=self.n1 {
            for x0 in 0..=self.n0 {
                if self.fp(x1, x0) <= threshold + TIE_EPS {
                    terms[(x1 + x0) as usize]
                        .push(self.lnc1[x1 as usize] + self.lnc0[x0 as usize]);
                }
            }
        }
        terms.into_iter().map(|t| log_sum_exp(&t)).collect()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Probability under independent binomials with common success probability
/// `pi` that the table falls in the rejection set encoded by `coeffs`.
fn tail_at(coeffs: &[f64], pi: f64) -> f64 {
    let ln_p = pi.ln();
    let ln_q = (-pi).ln_1p();
    let n = coeffs.len() - 1;
    let mut total = 0.0;
    for (s, &c) in coeffs.iter().enumerate() {
        if c > f64::NEG_INFINITY {
            total += (c + s as f64 * ln_p + (n - s) as f64 * ln_q).exp();
        }
    }
    total.min(1.0)
}

/// Supremum of the tail probability over `pi` in `[lo, hi]`: a grid of
/// `GRID_STEP` multiples plus the interval endpoints, then golden-section
/// refinement around the grid maximizer down to `REFINE_WIDTH`.
fn sup_tail(coeffs: &[f64], lo: f64, hi: f64) -> f64 {
    let lo = lo.max(GRID_STEP * 1e-6);
    let hi = hi.min(1.0 - GRID_STEP * 1e-6);
    if lo >= hi {
        return tail_at(coeffs, lo.min(hi).clamp(1e-10, 1.0 - 1e-10));
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_pi = lo;
    let consider = |pi: f64, best: &mut f64, best_pi: &mut f64| {
        let v = tail_at(coeffs, pi);
        if v > *best {
            *best = v;
            *best_pi = pi;
        }
    };
    consider(lo, &mut best, &mut best_pi);
    consider(hi, &mut best, &mut best_pi);
    let first = (lo / GRID_STEP).ceil() as u64;
    let last = (hi / GRID_STEP).floor() as u64;
    for i in first..=last {
        consider(i as f64 * GRID_STEP, &mut best, &mut best_pi);
    }
    let (a, b) = ((best_pi - GRID_STEP).max(lo), (best_pi + GRID_STEP).min(hi));
    let refined = golden_max(|pi| tail_at(coeffs, pi), a, b);
    best.max(refined)
}

/// Golden-section search for the maximum of `f` on `[a, b]`.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = fc.max(fd);
    while b - a > REFINE_WIDTH {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        best = best.max(fc.max(fd));
    }
    best
}

/// Exact unconditional Fisher--Boschloo test: the p-value is the supremum
/// over the common success probability of the chance of a Fisher p-value
/// at most the observed one (ties included).
pub fn boschloo_exact(t: &TwoByTwo) -> TestResult {
    let ft = FisherTable::new(t.n1, t.n0);
    let observed = ft.fp(t.x1, t.x0);
    let coeffs = ft.reject_coeffs(observed);
    let sup = sup_tail(&coeffs, GRID_STEP, 1.0 - GRID_STEP);
    TestResult {
        p_value: sup.min(1.0),
        statistic: observed,
        method: TestMethod::Boschloo,
        gamma: 0.0,
    }
}

/// Points of the curve `pi -> Pr_pi(Fisher p <= observed)` on an even
/// interior grid; the Boschloo p-value is the supremum of this curve.
/// Intended for plots and diagnostics.
pub fn boschloo_tail_curve(t: &TwoByTwo, points: usize) -> Vec<(f64, f64)> {
    let ft = FisherTable::new(t.n1, t.n0);
    let coeffs = ft.reject_coeffs(ft.fp(t.x1, t.x0));
    (1..=points)
        .map(|i| {
            let pi = i as f64 / (points as f64 + 1.0);
            (pi, tail_at(&coeffs, pi))
        })
        .collect()
}

/// Quantile of the Beta distribution by bisection on the regularized
/// incomplete beta function (the library's generic inverse is too coarse
/// for confidence limits).
fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Clopper--Pearson interval for a binomial proportion at the given
/// confidence level.
pub fn clopper_pearson(x: u64, n: u64, confidence: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Parameter("clopper_pearson needs n >= 1".into()));
    }
    if !(0.0..1.0).contains(&confidence) {
        return Err(Error::Parameter(format!(
            "confidence must be in [0, 1), got {confidence}"
        )));
    }
    let a2 = (1.0 - confidence) / 2.0;
    let lower = if x == 0 {
        0.0
    } else {
        beta_quantile(x as f64, (n - x) as f64 + 1.0, a2)
    };
    let upper = if x == n {
        1.0
    } else {
        beta_quantile(x as f64 + 1.0, (n - x) as f64, 1.0 - a2)
    };
    Ok((lower, upper))
}

/// Berger--Boos test: the nuisance supremum is restricted to the
/// `100(1-gamma)%` Clopper--Pearson interval for the pooled success
/// probability, and `gamma` is added to the p-value.
pub fn berger_boos(t: &TwoByTwo, gamma: f64) -> Result<TestResult> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Parameter(format!(
            "berger_boos gamma must be in (0, 1), got {gamma}"
        )));
    }
    let ft = FisherTable::new(t.n1, t.n0);
    let observed = ft.fp(t.x1, t.x0);
    let coeffs = ft.reject_coeffs(observed);
    let (lo, hi) = clopper_pearson(t.x1 + t.x0, t.n1 + t.n0, 1.0 - gamma)?;
    let sup = sup_tail(&coeffs, lo, hi);
    Ok(TestResult {
        p_value: (gamma + sup).min(1.0),
        statistic: observed,
        method: TestMethod::BergerBoos,
        gamma,
    })
}

/// Dispatch on method; `gamma` is required for Berger--Boos and must be
/// absent otherwise.
pub fn run_test(t: &TwoByTwo, method: TestMethod, gamma: Option<f64>) -> Result<TestResult> {
    match (method, gamma) {
        (TestMethod::Wald, None) => Ok(wald_one_sided(t)),
        (TestMethod::Boschloo, None) => Ok(boschloo_exact(t)),
        (TestMethod::BergerBoos, Some(g)) => berger_boos(t, g),
        (TestMethod::BergerBoos, None) => Err(Error::Parameter(
            "berger_boos requires a gamma".into(),
        )),
        (m, Some(_)) => Err(Error::Parameter(format!(
            "gamma is only meaningful for berger_boos, not {m}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(x1: u64, n1: u64, x0: u64, n0: u64) -> TwoByTwo {
        TwoByTwo::new(x1, n1, x0, n0).unwrap()
    }

    #[test]
    fn wald_equal_proportions() {
        let r = wald_one_sided(&t(5, 10, 5, 10));
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wald_degenerate_equal_is_one() {
        let r = wald_one_sided(&t(0, 10, 0, 10));
        assert_eq!(r.p_value, 1.0);
        let r = wald_one_sided(&t(10, 10, 10, 10));
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn wald_degenerate_opposite_is_zero() {
        let r = wald_one_sided(&t(10, 10, 0, 10));
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn wald_worked_example() {
        let r = wald_one_sided(&t(8, 10, 2, 10));
        let w = 0.6 / (2.0_f64 * 0.8 * 0.2 / 10.0).sqrt();
        assert!((r.statistic - w).abs() < 1e-12);
        // Upper normal tail at 3.3541…, frozen from an erfc oracle.
        assert!((r.p_value - 3.981_150_788e-4).abs() < 1e-9);
    }

    #[test]
    fn fisher_single_success_split() {
        assert!((fisher_one_sided(&t(1, 1, 0, 1)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fisher_single_extreme_table() {
        // All 3 successes in arm 1: 1 / C(6,3).
        assert!((fisher_one_sided(&t(3, 3, 0, 3)) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn fisher_zero_successes_is_one() {
        assert!((fisher_one_sided(&t(0, 7, 3, 5)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fisher_table_matches_direct_computation() {
        let ft = FisherTable::new(7, 5);
        for x1 in 0..=7 {
            for x0 in 0..=5 {
                let direct = fisher_one_sided(&t(x1, 7, x0, 5));
                assert!(
                    (ft.fp(x1, x0) - direct).abs() < 1e-12,
                    "mismatch at ({x1}, {x0})"
                );
            }
        }
    }

    #[test]
    fn boschloo_dominates_fisher() {
        for n1 in 1..=5u64 {
            for n0 in 1..=5u64 {
                for x1 in 0..=n1 {
                    for x0 in 0..=n0 {
                        let tb = t(x1, n1, x0, n0);
                        let pb = boschloo_exact(&tb).p_value;
                        let pf = fisher_one_sided(&tb);
                        assert!(
                            pb <= pf + 1e-9,
                            "boschloo {pb} > fisher {pf} at ({x1},{n1},{x0},{n0})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn boschloo_wrong_direction_is_one() {
        let r = boschloo_exact(&t(0, 5, 3, 5));
        assert!((r.p_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn berger_boos_small_gamma_recovers_boschloo() {
        for tb in [t(2, 6, 1, 7), t(8, 10, 2, 10)] {
            let pb = boschloo_exact(&tb).p_value;
            let bb = berger_boos(&tb, 1e-8).unwrap().p_value;
            assert!((bb - 1e-8 - pb).abs() < 1e-6, "bb {bb} vs boschloo {pb}");
        }
    }

    #[test]
    fn berger_boos_adds_gamma() {
        let bb = berger_boos(&t(3, 8, 3, 8), 0.001).unwrap();
        assert!(bb.p_value >= 0.001);
        assert!(bb.p_value <= 1.0);
        assert_eq!(bb.gamma, 0.001);
    }

    #[test]
    fn berger_boos_rejects_bad_gamma() {
        assert!(berger_boos(&t(1, 2, 1, 2), 0.0).is_err());
        assert!(berger_boos(&t(1, 2, 1, 2), 1.0).is_err());
    }

    #[test]
    fn p_values_non_increasing_in_x1() {
        let (n1, n0, x0) = (6u64, 6u64, 2u64);
        let mut prev = [f64::INFINITY; 3];
        for x1 in 0..=n1 {
            let tb = t(x1, n1, x0, n0);
            let ps = [
                wald_one_sided(&tb).p_value,
                boschloo_exact(&tb).p_value,
                berger_boos(&tb, 0.001).unwrap().p_value,
            ];
            for (p, prev) in ps.iter().zip(prev.iter()) {
                assert!(*p <= prev + 1e-9, "p increased in x1: {ps:?}");
            }
            prev = ps;
        }
    }

    #[test]
    fn rejection_region_avoids_null_point_estimates() {
        // p <= alpha/2 < 1/2 must imply a positive point estimate; check the
        // contrapositive over a full small-table enumeration.
        for n1 in 1..=5u64 {
            for n0 in 1..=5u64 {
                for x1 in 0..=n1 {
                    for x0 in 0..=n0 {
                        let tb = t(x1, n1, x0, n0);
                        if tb.p1() <= tb.p0() {
                            assert!(wald_one_sided(&tb).p_value >= 0.5 - 1e-9);
                            assert!(boschloo_exact(&tb).p_value >= 0.5 - 1e-9);
                            assert!(
                                berger_boos(&tb, 0.001).unwrap().p_value >= 0.5 - 1e-9
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn tail_curve_is_bounded_by_boschloo_p() {
        let tb = t(5, 8, 1, 6);
        let p = boschloo_exact(&tb).p_value;
        let curve = boschloo_tail_curve(&tb, 99);
        assert_eq!(curve.len(), 99);
        for (pi, tail) in curve {
            assert!((0.0..1.0).contains(&pi));
            assert!((0.0..=1.0).contains(&tail));
            assert!(tail <= p + 1e-9, "tail {tail} at pi {pi} exceeds p {p}");
        }
    }

    #[test]
    fn clopper_pearson_known_interval() {
        // x=0: lower must be 0 and upper 1 - (gamma/2)^(1/n).
        let (lo, hi) = clopper_pearson(0, 10, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025_f64.powf(0.1))).abs() < 1e-9);
        // Symmetry: x=n mirrors x=0.
        let (lo2, hi2) = clopper_pearson(10, 10, 0.95).unwrap();
        assert_eq!(hi2, 1.0);
        assert!((lo2 - (1.0 - hi)).abs() < 1e-9);
    }

    #[test]
    fn clopper_pearson_matches_binomial_tail_inversion() {
        // Independent route: bisect the binomial tail probabilities.
        let (x, n, conf) = (3u64, 12u64, 0.999);
        let a2 = (1.0 - conf) / 2.0;
        let binom_ge = |p: f64| -> f64 {
            (x..=n)
                .map(|k| {
                    (ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
                })
                .sum()
        };
        let binom_le = |p: f64| -> f64 {
            (0..=x)
                .map(|k| {
                    (ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
                })
                .sum()
        };
        let bisect = |f: &dyn Fn(f64) -> f64, target: f64, rising: bool| -> f64 {
            let (mut a, mut b) = (1e-12, 1.0 - 1e-12);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if (f(m) < target) == rising {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        };
        let lo_ref = bisect(&|p| binom_ge(p), a2, true);
        let hi_ref = bisect(&|p| binom_le(p), a2, false);
        let (lo, hi) = clopper_pearson(x, n, conf).unwrap();
        assert!((lo - lo_ref).abs() < 1e-8, "lower {lo} vs {lo_ref}");
        assert!((hi - hi_ref).abs() < 1e-8, "upper {hi} vs {hi_ref}");
    }

    #[test]
    fn run_test_enforces_gamma_pairing() {
        let tb = t(1, 2, 1, 2);
        assert!(run_test(&tb, TestMethod::Wald, Some(0.1)).is_err());
        assert!(run_test(&tb, TestMethod::BergerBoos, None).is_err());
        assert!(run_test(&tb, TestMethod::Boschloo, None).is_ok());
    }
}
