//! Browser bindings for the falsification toolkit.
//!
//! Three operations back the demo page: classify a point of the null-space
//! octahedron, analyze a full 2x2x2 count table, and trace the
//! rejection-probability curve behind the exact Boschloo p-value. All
//! results are JSON strings so the page needs no generated glue beyond
//! `wasm-bindgen`.
//!
//! The `*_impl` functions carry the logic and are exercised by native
//! tests; the exported wrappers only translate errors into `JsError`,
//! which exists solely on the wasm target.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ivcheck::falsify::{test_unconditional, FalsifyReport};
use ivcheck::ineq::{
    octahedron_membership, zeta_of, Membership, TwoByTwo, ZetaPoint, DEFAULT_BOUNDARY_TOL,
};
use ivcheck::tabulate::JointCounts;
use ivcheck::tests2x2::{boschloo_tail_curve, fisher_one_sided, run_test, TestMethod};

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn parse_method(method: &str, smallest_arm: u64) -> Result<TestMethod, String> {
    match method {
        "auto" => Ok(if smallest_arm >= 200 {
            TestMethod::Wald
        } else {
            TestMethod::Boschloo
        }),
        "wald" => Ok(TestMethod::Wald),
        "boschloo" => Ok(TestMethod::Boschloo),
        "berger_boos" => Ok(TestMethod::BergerBoos),
        other => Err(format!("unknown method `{other}`")),
    }
}

#[derive(Serialize)]
struct PointReport {
    u00: f64,
    u01: f64,
    u10: f64,
    u11: f64,
    membership: Membership,
}

fn classify_point_impl(u00: f64, u01: f64, u10: f64) -> Result<String, String> {
    let zeta = ZetaPoint::new(u00, u01, u10).map_err(|e| e.to_string())?;
    let membership =
        octahedron_membership(&zeta, DEFAULT_BOUNDARY_TOL).map_err(|e| e.to_string())?;
    to_json(&PointReport {
        u00,
        u01,
        u10,
        u11: zeta.u11(),
        membership,
    })
}

/// Classify `(u00, u01, u10)` against the octahedron of laws compatible
/// with the instrumental variable model. Returns JSON.
#[wasm_bindgen]
pub fn classify_point(u00: f64, u01: f64, u10: f64) -> Result<String, JsError> {
    classify_point_impl(u00, u01, u10).map_err(|e| JsError::new(&e))
}

#[derive(Serialize)]
struct TableReport {
    zeta: PointReport,
    report: FalsifyReport,
}

fn analyze_table_impl(
    cells: Vec<u32>,
    alpha: f64,
    method: &str,
    gamma: Option<f64>,
) -> Result<String, String> {
    let cells: [u64; 8] = cells
        .iter()
        .map(|&c| u64::from(c))
        .collect::<Vec<u64>>()
        .try_into()
        .map_err(|_| "expected exactly 8 cell counts".to_string())?;
    let table = JointCounts::binary(cells);
    let smallest = table.arm_total(0).min(table.arm_total(1));
    let method = parse_method(method, smallest)?;
    let gamma = match method {
        TestMethod::BergerBoos => Some(gamma.unwrap_or(0.001)),
        _ => gamma,
    };
    let report = test_unconditional(&table, alpha, method, gamma).map_err(|e| e.to_string())?;
    let zeta = zeta_of(&table).map_err(|e| e.to_string())?;
    let membership =
        octahedron_membership(&zeta, DEFAULT_BOUNDARY_TOL).map_err(|e| e.to_string())?;
    to_json(&TableReport {
        zeta: PointReport {
            u00: zeta.u00,
            u01: zeta.u01,
            u10: zeta.u10,
            u11: zeta.u11(),
            membership,
        },
        report,
    })
}

/// Run the unconditional falsification test on a binary table.
///
/// `cells` holds the eight counts in the order
/// `n(z=0,d=0,y=0), n(0,0,1), n(0,1,0), n(0,1,1), n(1,0,0), ..., n(1,1,1)`.
/// `method` is one of `auto`, `wald`, `boschloo`, `berger_boos`. Returns
/// JSON with the empirical octahedron coordinates and the full report.
#[wasm_bindgen]
pub fn analyze_table(
    cells: Vec<u32>,
    alpha: f64,
    method: &str,
    gamma: Option<f64>,
) -> Result<String, JsError> {
    analyze_table_impl(cells, alpha, method, gamma).map_err(|e| JsError::new(&e))
}

#[derive(Serialize)]
struct CurveReport {
    fisher_p: f64,
    test_p: f64,
    method: String,
    curve: Vec<[f64; 2]>,
}

fn boschloo_curve_impl(x1: u32, n1: u32, x0: u32, n0: u32, points: u32) -> Result<String, String> {
    let t = TwoByTwo::new(
        u64::from(x1),
        u64::from(n1),
        u64::from(x0),
        u64::from(n0),
    )
    .map_err(|e| e.to_string())?;
    let points = points.clamp(3, 2000) as usize;
    let exact = run_test(&t, TestMethod::Boschloo, None).map_err(|e| e.to_string())?;
    to_json(&CurveReport {
        fisher_p: fisher_one_sided(&t),
        test_p: exact.p_value,
        method: "boschloo".to_string(),
        curve: boschloo_tail_curve(&t, points)
            .into_iter()
            .map(|(pi, tail)| [pi, tail])
            .collect(),
    })
}

/// Trace `pi -> Pr_pi(Fisher p <= observed)` for a 2x2 table; the Boschloo
/// p-value is the supremum of this curve. Returns JSON with the Fisher and
/// exact p-values and `points` curve samples.
#[wasm_bindgen]
pub fn boschloo_curve(
    x1: u32,
    n1: u32,
    x0: u32,
    n0: u32,
    points: u32,
) -> Result<String, JsError> {
    boschloo_curve_impl(x1, n1, x0, n0, points).map_err(|e| JsError::new(&e))
}
