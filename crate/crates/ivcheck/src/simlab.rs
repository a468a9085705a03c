//! Data-generating processes and a seeded Monte Carlo harness.
//!
//! A [`DgpSpec`] describes the joint law of `(Z, D, Y)` either directly by
//! the arm-wise margins of `(D, Y)` or through a latent classification into
//! compliance and response types; the latent form always satisfies the
//! instrumental inequalities, while margins can be placed anywhere in the
//! simplex. [`boundary_spec`] freezes canonical laws in each size regime of
//! the testing theory: interior, one equality active, two equalities
//! active, and one inequality violated.
//!
//! Replications are reproducible and order-independent: replication `i` of
//! master seed `s` always uses stream `i` of a counter-based generator
//! seeded with `s`, so parallel and serial runs agree.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::falsify::test_unconditional;
use crate::ineq::ZetaPoint;
use crate::tabulate::JointCounts;
use crate::tests2x2::TestMethod;
use crate::{Error, Result};

/// Tolerance for probability vectors summing to 1.
const SUM_EPS: f64 = 1e-12;

/// A law of `(Z, D, Y)` with binary treatment and outcome.
///
/// `Margins` gives `p(D=d, Y=y | Z=z)` for each arm, indexed `d * 2 + y`.
/// `Latent` gives probabilities of the 16 cross-classifications of
/// compliance type (never-taker, complier, defier, always-taker, in that
/// order) and response type `(Y(0), Y(1))`, indexed
/// `compliance * 4 + 2 * y0 + y1`; the induced law always satisfies the
/// instrumental inequalities because `Z` only acts through `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DgpSpec {
    Margins {
        p1: [f64; 4],
        p0: [f64; 4],
        pz: f64,
    },
    Latent {
        type_probs: [f64; 16],
        pz: f64,
    },
}

fn check_simplex(probs: &[f64], what: &str) -> Result<()> {
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::OutsideSimplex(format!(
            "{what} entries must lie in [0, 1]"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_EPS {
        return Err(Error::OutsideSimplex(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        let pz = match self {
            DgpSpec::Margins { p1, p0, pz } => {
                check_simplex(p1, "p1")?;
                check_simplex(p0, "p0")?;
                *pz
            }
            DgpSpec::Latent { type_probs, pz } => {
                check_simplex(type_probs, "type_probs")?;
                *pz
            }
        };
        if !(pz > 0.0 && pz < 1.0) {
            return Err(Error::Parameter(format!(
                "pz must be in (0, 1), got {pz}"
            )));
        }
        Ok(())
    }

    /// The arm-wise margins `p(D=d, Y=y | Z=z)` indexed `d * 2 + y`, and
    /// the instrument probability.
    pub fn arm_margins(&self) -> Result<([f64; 4], [f64; 4], f64)> {
        self.validate()?;
        match self {
            DgpSpec::Margins { p1, p0, pz } => Ok((*p1, *p0, *pz)),
            DgpSpec::Latent { type_probs, pz } => {
                let mut m = [[0.0f64; 4]; 2];
                for c in 0..4 {
                    for r in 0..4 {
                        let w = type_probs[c * 4 + r];
                        for (z, margin) in m.iter_mut().enumerate() {
                            let d = match c {
                                0 => 0,
                                1 => z,
                                2 => 1 - z,
                                _ => 1,
                            };
                            let y = if d == 0 { r / 2 } else { r % 2 };
                            margin[d * 2 + y] += w;
                        }
                    }
                }
                Ok((m[1], m[0], *pz))
            }
        }
    }
}

/// Population value of `(u00, u01, u10)` under a specification.
pub fn zeta_of_dgp(spec: &DgpSpec) -> Result<ZetaPoint> {
    let (p1, p0, _) = spec.arm_margins()?;
    let u = |d: usize, y: usize| p1[d * 2 + y] + p0[d * 2 + (1 - y)];
    ZetaPoint::new(u(0, 0), u(0, 1), u(1, 0))
}

/// Size regimes of the level-alpha theory for the binary test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// All four inequalities strict: asymptotic size 0.
    Interior,
    /// Exactly one equality active: asymptotic size alpha / 2.
    OneEquality,
    /// Two equalities active: asymptotic size alpha.
    TwoEqualities,
    /// Inequality `(d, y)` violated: power tends to 1.
    Exterior { d: usize, y: usize },
}

/// A canonical margins specification in the given regime, with a balanced
/// instrument.
///
/// The frozen laws have population coordinates `(0.5, 0.5, 0.5)` for the
/// interior, `(0.2, 1.0, 0.4)` with only `u01` active for one equality,
/// `(1.0, 1.0, 0.0)` with `u00` and `u01` active for two equalities, and
/// `u(d, y) = 1.3` with all other coordinates at most 0.3 for the exterior.
pub fn boundary_spec(regime: Regime) -> Result<DgpSpec> {
    let (p1, p0) = match regime {
        Regime::Interior => ([0.25, 0.25, 0.25, 0.25], [0.25, 0.25, 0.25, 0.25]),
        Regime::OneEquality => ([0.1, 0.5, 0.2, 0.2], [0.5, 0.1, 0.2, 0.2]),
        Regime::TwoEqualities => ([0.5, 0.5, 0.0, 0.0], [0.5, 0.5, 0.0, 0.0]),
        Regime::Exterior { d, y } => {
            if d > 1 || y > 1 {
                return Err(Error::Parameter(format!(
                    "exterior regime needs binary (d, y), got ({d}, {y})"
                )));
            }
            let mut p1 = [0.0; 4];
            let mut p0 = [0.0; 4];
            p1[d * 2 + y] = 0.8;
            p1[d * 2 + (1 - y)] = 0.05;
            p1[(1 - d) * 2 + y] = 0.1;
            p1[(1 - d) * 2 + (1 - y)] = 0.05;
            p0[d * 2 + (1 - y)] = 0.5;
            p0[d * 2 + y] = 0.2;
            p0[(1 - d) * 2 + (1 - y)] = 0.2;
            p0[(1 - d) * 2 + y] = 0.1;
            (p1, p0)
        }
    };
    Ok(DgpSpec::Margins {
        p1,
        p0,
        pz: 0.5,
    })
}

/// The generator for replication `stream` of master seed `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_cell(margins: &[f64; 4], rng: &mut ChaCha8Rng) -> (usize, usize) {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in margins.iter().enumerate() {
        acc += p;
        if u < acc {
            return (i / 2, i % 2);
        }
    }
    (1, 1)
}

/// Draw `n` units with `Z ~ Bernoulli(pz)` and `(D, Y)` from the arm
/// margins.
pub fn sample(spec: &DgpSpec, n: u64, rng: &mut ChaCha8Rng) -> Result<JointCounts> {
    let (p1, p0, pz) = spec.arm_margins()?;
    let mut t = JointCounts::zeros(2, 2)?;
    for _ in 0..n {
        let z = usize::from(rng.gen_bool(pz));
        let (d, y) = draw_cell(if z == 1 { &p1 } else { &p0 }, rng);
        t.add(z, d, y, 1);
    }
    Ok(t)
}

/// Draw fixed numbers of units in each instrument arm.
pub fn sample_arms(spec: &DgpSpec, n1: u64, n0: u64, rng: &mut ChaCha8Rng) -> Result<JointCounts> {
    let (p1, p0, _) = spec.arm_margins()?;
    let mut t = JointCounts::zeros(2, 2)?;
    for _ in 0..n1 {
        let (d, y) = draw_cell(&p1, rng);
        t.add(1, d, y, 1);
    }
    for _ in 0..n0 {
        let (d, y) = draw_cell(&p0, rng);
        t.add(0, d, y, 1);
    }
    Ok(t)
}

/// Monte Carlo rejection rate over seeded replications.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McResult {
    pub reps: usize,
    pub rejected: usize,
    /// Replications that produced no decision; counted as non-rejections.
    pub unevaluable: usize,
    /// Rejections divided by total replications.
    pub rate: f64,
    /// Binomial standard error of `rate`.
    pub mc_se: f64,
    pub seed: u64,
}

/// Run `reps` independent replications in parallel. The closure receives
/// the replication index and its dedicated generator and returns the
/// rejection decision, or `None` when the replication is unevaluable
/// (for example an empty instrument arm at small `n`); unevaluable
/// replications count as non-rejections.
pub fn mc_rejection_rate<F>(reps: usize, seed: u64, eval: F) -> McResult
where
    F: Fn(usize, &mut ChaCha8Rng) -> Option<bool> + Sync,
{
    let (rejected, unevaluable) = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_for(seed, rep as u64);
            match eval(rep, &mut rng) {
                Some(true) => (1u64, 0u64),
                Some(false) => (0, 0),
                None => (0, 1),
            }
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let rate = rejected as f64 / reps as f64;
    McResult {
        reps,
        rejected: rejected as usize,
        unevaluable: unevaluable as usize,
        rate,
        mc_se: (rate * (1.0 - rate) / reps as f64).sqrt(),
        seed,
    }
}

/// One Monte Carlo scenario: repeated sampling from a specification
/// followed by the unconditional falsification test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub dgp: DgpSpec,
    pub n: u64,
    pub reps: usize,
    pub alpha: f64,
    pub method: TestMethod,
    #[serde(default)]
    pub gamma: Option<f64>,
}

fn config_version() -> u32 {
    crate::falsify::REPORT_SCHEMA_VERSION
}

/// A batch of scenarios sharing a master seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default = "config_version")]
    pub schema_version: u32,
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
}

impl SimConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// One row of the scenario log.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult {
    pub scenario_id: String,
    pub n: u64,
    pub reps: usize,
    pub rate: f64,
    pub mc_se: f64,
    pub seed: u64,
}

/// Run every scenario, deriving a distinct seed per scenario from the
/// master seed so adding or reordering scenarios does not perturb others
/// beyond their position.
pub fn run_scenarios(config: &SimConfig) -> Result<Vec<ScenarioResult>> {
    config
        .scenarios
        .iter()
        .enumerate()
        .map(|(i, sc)| {
            sc.dgp.validate()?;
            let seed = config
                .seed
                .wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            // Surface configuration errors (bad alpha or gamma) before
            // burning replications: probe with a deterministic draw.
            let mut probe_rng = rng_for(seed, u64::MAX);
            let probe = sample(&sc.dgp, sc.n.min(64), &mut probe_rng)?;
            match test_unconditional(&probe, sc.alpha, sc.method, sc.gamma) {
                Ok(_) | Err(Error::EmptyArm(_)) => {}
                Err(e) => return Err(e),
            }
            let mc = mc_rejection_rate(sc.reps, seed, |_, rng| {
                let t = sample(&sc.dgp, sc.n, rng).ok()?;
                let report = test_unconditional(&t, sc.alpha, sc.method, sc.gamma).ok()?;
                Some(report.falsified)
            });
            Ok(ScenarioResult {
                scenario_id: sc.id.clone(),
                n: sc.n,
                reps: sc.reps,
                rate: mc.rate,
                mc_se: mc.mc_se,
                seed,
            })
        })
        .collect()
}

/// Write results as CSV with columns
/// `scenario_id,n,reps,rate,mc_se,seed`.
pub fn write_scenario_log(results: &[ScenarioResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in results {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
