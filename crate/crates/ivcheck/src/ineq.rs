//! Instrumental-inequality statistics and the geometry of the null space.
//!
//! For a binary table the four statistics
//! `u(d,y) = p(D=d,Y=y | Z=1) + p(D=d,Y=1-y | Z=0)` sum to exactly 2, and
//! the model requires each `u(d,y) <= 1`. Shifting by one,
//! `delta(d,y) = u(d,y) - 1` is the difference of two binomial proportions:
//! the success indicator in arm Z=1 is `I(D=d, Y=y)` and in arm Z=0 it is
//! `1 - I(D=d, Y=1-y)`. The derived 2x2 table of that comparison is
//! [`q_table`].
//!
//! In `(u00, u01, u10)` coordinates the null space is an octahedron inside
//! the simplex `{u00 + u01 + u10 <= 2, u >= 0}`; at most two of the four
//! constraints can be active at once.

use serde::{Deserialize, Serialize};

use crate::tabulate::JointCounts;
use crate::{Error, Result};

/// Slack used when validating that a point lies in the simplex.
const SIMPLEX_EPS: f64 = 1e-12;

/// Default tolerance for boundary classification of real-valued points.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-9;

/// A two-arm binomial table: `x1` successes of `n1` in arm Z=1, `x0` of
/// `n0` in arm Z=0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoByTwo {
    pub x1: u64,
    pub n1: u64,
    pub x0: u64,
    pub n0: u64,
}

impl TwoByTwo {
    pub fn new(x1: u64, n1: u64, x0: u64, n0: u64) -> Result<Self> {
        if n1 == 0 || n0 == 0 {
            return Err(Error::EmptyArm(usize::from(n1 == 0)));
        }
        if x1 > n1 || x0 > n0 {
            return Err(Error::Parameter(format!(
                "successes exceed arm totals: ({x1}/{n1}, {x0}/{n0})"
            )));
        }
        Ok(TwoByTwo { x1, n1, x0, n0 })
    }

    pub fn p1(&self) -> f64 {
        self.x1 as f64 / self.n1 as f64
    }

    pub fn p0(&self) -> f64 {
        self.x0 as f64 / self.n0 as f64
    }
}

/// A point estimate of one `delta(d,y)` with its Wald standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimate {
    pub estimate: f64,
    pub se: f64,
    pub n1: u64,
    pub n0: u64,
}

/// `(u00, u01, u10)` coordinates in the simplex; `u11` is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaPoint {
    pub u00: f64,
    pub u01: f64,
    pub u10: f64,
}

impl ZetaPoint {
    /// Validates simplex membership: coordinates non-negative and summing to
    /// at most 2 (so the derived `u11` is also non-negative).
    pub fn new(u00: f64, u01: f64, u10: f64) -> Result<Self> {
        let coords = [u00, u01, u10];
        if coords.iter().any(|u| !u.is_finite() || *u < -SIMPLEX_EPS) {
            return Err(Error::OutsideSimplex(format!(
                "negative or non-finite coordinate in ({u00}, {u01}, {u10})"
            )));
        }
        let sum = u00 + u01 + u10;
        if sum > 2.0 + SIMPLEX_EPS {
            return Err(Error::OutsideSimplex(format!(
                "coordinates sum to {sum} > 2"
            )));
        }
        Ok(ZetaPoint { u00, u01, u10 })
    }

    /// The derived fourth coordinate, `2 - u00 - u01 - u10`.
    pub fn u11(&self) -> f64 {
        2.0 - self.u00 - self.u01 - self.u10
    }

    /// Coordinate for inequality `(d, y)`.
    pub fn u(&self, d: usize, y: usize) -> f64 {
        match (d, y) {
            (0, 0) => self.u00,
            (0, 1) => self.u01,
            (1, 0) => self.u10,
            (1, 1) => self.u11(),
            _ => panic!("inequality index out of range: ({d}, {y})"),
        }
    }
}

/// Position of a point relative to the octahedron `u(d,y) <= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Interior,
    /// On the boundary; `active` lists the constraints holding with equality.
    Boundary { active: Vec<(usize, usize)> },
    /// Outside; `violated` lists the constraints exceeded.
    Exterior { violated: Vec<(usize, usize)> },
}

/// Bounds on the average controlled direct effect of Z on Y at `D = d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcdeInterval {
    pub lower: f64,
    pub upper: f64,
}

/// All four inequality indices in report order.
pub const INEQ_INDICES: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

/// The statistic `p(D=d,Y=y | Z=1) + p(D=d,Y=1-y | Z=0)` from empirical
/// proportions. The model requires it to be at most 1.
pub fn u_stat(table: &JointCounts, d: usize, y: usize) -> Result<f64> {
    table.require_binary()?;
    Ok(table.prop(1, d, y)? + table.prop(0, d, 1 - y)?)
}

/// The 2x2 table whose one-sided comparison tests `u(d,y) <= 1`:
/// successes in arm Z=1 are `I(D=d, Y=y)`, in arm Z=0 they are
/// `1 - I(D=d, Y=1-y)`.
pub fn q_table(table: &JointCounts, d: usize, y: usize) -> Result<TwoByTwo> {
    table.require_binary()?;
    let n1 = table.arm_total(1);
    let n0 = table.arm_total(0);
    if n1 == 0 {
        return Err(Error::EmptyArm(1));
    }
    if n0 == 0 {
        return Err(Error::EmptyArm(0));
    }
    TwoByTwo::new(table.count(1, d, y), n1, n0 - table.count(0, d, 1 - y), n0)
}

/// The shifted statistic `u(d,y) - 1` as a two-proportion difference, with
/// its unpooled Wald standard error. Degenerate arms contribute zero
/// variance.
pub fn delta(table: &JointCounts, d: usize, y: usize) -> Result<DeltaEstimate> {
    let q = q_table(table, d, y)?;
    Ok(delta_of_q(&q))
}

/// Delta estimate straight from a 2x2 table.
pub fn delta_of_q(q: &TwoByTwo) -> DeltaEstimate {
    let (p1, p0) = (q.p1(), q.p0());
    DeltaEstimate {
        estimate: p1 - p0,
        se: (p1 * (1.0 - p1) / q.n1 as f64 + p0 * (1.0 - p0) / q.n0 as f64).sqrt(),
        n1: q.n1,
        n0: q.n0,
    }
}

/// Empirical `(u00, u01, u10)` of a binary table.
pub fn zeta_of(table: &JointCounts) -> Result<ZetaPoint> {
    ZetaPoint::new(
        u_stat(table, 0, 0)?,
        u_stat(table, 0, 1)?,
        u_stat(table, 1, 0)?,
    )
}

/// Classify a point against the four constraints `u(d,y) <= 1`.
///
/// Constraints within `tol` of 1 are active; above `1 + tol`, violated.
/// `tol` must lie in `[0, 0.25)`: below that bound the simplex geometry
/// guarantees at most two constraints can be active, which is asserted.
pub fn octahedron_membership(zeta: &ZetaPoint, tol: f64) -> Result<Membership> {
    if !(0.0..0.25).contains(&tol) {
        return Err(Error::Parameter(format!(
            "boundary tolerance must be in [0, 0.25), got {tol}"
        )));
    }
    // Re-validate in case the point was built from raw fields.
    let zeta = ZetaPoint::new(zeta.u00, zeta.u01, zeta.u10)?;
    let mut active = Vec::new();
    let mut violated = Vec::new();
    for (d, y) in INEQ_INDICES {
        let u = zeta.u(d, y);
        if u > 1.0 + tol {
            violated.push((d, y));
        } else if (u - 1.0).abs() <= tol {
            active.push((d, y));
        }
    }
    assert!(
        active.len() <= 2,
        "more than two active constraints at ({}, {}, {})",
        zeta.u00,
        zeta.u01,
        zeta.u10
    );
    Ok(if !violated.is_empty() {
        Membership::Exterior { violated }
    } else if !active.is_empty() {
        Membership::Boundary { active }
    } else {
        Membership::Interior
    })
}

/// Classify the empirical point of a count table by exact integer
/// arithmetic: `u(d,y)` compares to 1 as
/// `n(1,d,y) * n0 + n(0,d,1-y) * n1` compares to `n1 * n0`.
pub fn octahedron_membership_exact(table: &JointCounts) -> Result<Membership> {
    table.require_binary()?;
    let n1 = table.arm_total(1) as u128;
    let n0 = table.arm_total(0) as u128;
    if n1 == 0 {
        return Err(Error::EmptyArm(1));
    }
    if n0 == 0 {
        return Err(Error::EmptyArm(0));
    }
    let mut active = Vec::new();
    let mut violated = Vec::new();
    for (d, y) in INEQ_INDICES {
        let lhs = table.count(1, d, y) as u128 * n0 + table.count(0, d, 1 - y) as u128 * n1;
        let rhs = n1 * n0;
        if lhs > rhs {
            violated.push((d, y));
        } else if lhs == rhs {
            active.push((d, y));
        }
    }
    assert!(active.len() <= 2, "more than two active constraints");
    Ok(if !violated.is_empty() {
        Membership::Exterior { violated }
    } else if !active.is_empty() {
        Membership::Boundary { active }
    } else {
        Membership::Interior
    })
}

/// Plug-in bounds on ACDE(d):
/// `p(d,1|1) + p(d,0|0) - 1 <= ACDE(d) <= 1 - p(d,0|1) - p(d,1|0)`.
///
/// Valid as bounds only under randomization of Z; `lower <= upper` holds
/// whenever the source distribution satisfies the inequalities for this `d`.
pub fn acde_bounds(table: &JointCounts, d: usize) -> Result<AcdeInterval> {
    table.require_binary()?;
    Ok(AcdeInterval {
        lower: table.prop(1, d, 1)? + table.prop(0, d, 0)? - 1.0,
        upper: 1.0 - table.prop(1, d, 0)? - table.prop(0, d, 1)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 25 observations in every (z, d, y) cell.
    fn uniform_table() -> JointCounts {
        JointCounts::binary([25; 8])
    }

    /// Arm Z=1: n(1,0,1)=3 of 10; arm Z=0: n(0,0,0)=4 of 8.
    fn worked_table() -> JointCounts {
        JointCounts::binary([4, 0, 0, 4, 0, 3, 7, 0])
    }

    #[test]
    fn u_stat_uniform_is_half_everywhere() {
        let t = uniform_table();
        for (d, y) in INEQ_INDICES {
            assert!((u_stat(&t, d, y).unwrap() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn u_stat_maximal_violation_is_two() {
        // Arm Z=1 all on (D=0, Y=1); arm Z=0 all on (D=0, Y=0).
        let t = JointCounts::binary([6, 0, 0, 0, 0, 9, 0, 0]);
        assert!((u_stat(&t, 0, 1).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn u_stat_direct_arithmetic() {
        assert!((u_stat(&worked_table(), 0, 1).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn u_stat_requires_nonempty_arms() {
        let t = JointCounts::binary([1, 0, 0, 0, 0, 0, 0, 0]);
        assert!(matches!(u_stat(&t, 0, 0), Err(Error::EmptyArm(1))));
    }

    #[test]
    fn q_table_worked_example() {
        let q = q_table(&worked_table(), 0, 1).unwrap();
        assert_eq!(q, TwoByTwo::new(3, 10, 4, 8).unwrap());
        let d = delta_of_q(&q);
        assert!((d.estimate - (0.3 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn q_table_complement_of_full_cell() {
        // Arm z=0 entirely on (D=0, Y=0): for (d,y) = (0,1), x0 = 0.
        let t = JointCounts::binary([7, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(q_table(&t, 0, 1).unwrap().x0, 0);
    }

    #[test]
    fn q_table_complement_of_empty_cell() {
        // Arm z=0 with no (D=0, Y=0) mass: for (d,y) = (0,1), x0 = n0.
        let t = JointCounts::binary([0, 2, 3, 2, 1, 1, 1, 1]);
        assert_eq!(q_table(&t, 0, 1).unwrap().x0, 7);
    }

    #[test]
    fn delta_equals_u_minus_one() {
        let t = worked_table();
        for (d, y) in INEQ_INDICES {
            let dl = delta(&t, d, y).unwrap();
            let u = u_stat(&t, d, y).unwrap();
            assert!((dl.estimate - (u - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_uniform_is_minus_half() {
        let t = uniform_table();
        for (d, y) in INEQ_INDICES {
            assert!((delta(&t, d, y).unwrap().estimate + 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn delta_estimates_sum_to_minus_two() {
        let t = worked_table();
        let sum: f64 = INEQ_INDICES
            .iter()
            .map(|&(d, y)| delta(&t, d, y).unwrap().estimate)
            .sum();
        assert!((sum + 2.0).abs() < 1e-12);
    }

    #[test]
    fn delta_se_binomial_arithmetic() {
        let d = delta(&worked_table(), 0, 1).unwrap();
        let expected = (0.3_f64 * 0.7 / 10.0 + 0.5 * 0.5 / 8.0).sqrt();
        assert!((d.se - expected).abs() < 1e-15);
        assert!((d.se - 0.228_582_0).abs() < 1e-6);
    }

    #[test]
    fn zeta_uniform_is_center() {
        let z = zeta_of(&uniform_table()).unwrap();
        assert!((z.u00 - 0.5).abs() < 1e-15);
        assert!((z.u01 - 0.5).abs() < 1e-15);
        assert!((z.u10 - 0.5).abs() < 1e-15);
        assert!((z.u11() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zeta_coordinates_sum_to_two() {
        let z = zeta_of(&worked_table()).unwrap();
        let sum = z.u00 + z.u01 + z.u10 + z.u11();
        assert!((sum - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zeta_derived_u11_matches_u_stat() {
        let t = worked_table();
        let z = zeta_of(&t).unwrap();
        assert!((z.u11() - u_stat(&t, 1, 1).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn membership_center_is_interior() {
        let z = ZetaPoint::new(0.5, 0.5, 0.5).unwrap();
        assert_eq!(
            octahedron_membership(&z, 1e-9).unwrap(),
            Membership::Interior
        );
    }

    #[test]
    fn membership_vertex_has_two_active() {
        let z = ZetaPoint::new(1.0, 1.0, 0.0).unwrap();
        assert_eq!(
            octahedron_membership(&z, 1e-9).unwrap(),
            Membership::Boundary {
                active: vec![(0, 0), (0, 1)]
            }
        );
    }

    #[test]
    fn membership_exterior_names_violated_constraint() {
        let z = ZetaPoint::new(1.2, 0.4, 0.2).unwrap();
        assert_eq!(
            octahedron_membership(&z, 1e-9).unwrap(),
            Membership::Exterior {
                violated: vec![(0, 0)]
            }
        );
    }

    #[test]
    fn membership_rejects_points_outside_simplex() {
        assert!(ZetaPoint::new(1.5, 0.4, 0.2).is_err());
        assert!(ZetaPoint::new(-0.1, 0.4, 0.2).is_err());
    }

    #[test]
    fn membership_rejects_oversized_tolerance() {
        let z = ZetaPoint::new(0.5, 0.5, 0.5).unwrap();
        assert!(octahedron_membership(&z, 0.3).is_err());
    }

    #[test]
    fn exact_membership_matches_float_classification() {
        // u01 = 1 exactly: 3/10 + 7/10... use n(1,0,1)=3/10 and n(0,0,0)=7/10.
        let t = JointCounts::binary([7, 0, 3, 0, 0, 3, 7, 0]);
        let exact = octahedron_membership_exact(&t).unwrap();
        match exact {
            Membership::Boundary { ref active } => assert!(active.contains(&(0, 1))),
            other => panic!("expected boundary, got {other:?}"),
        }
    }

    #[test]
    fn acde_point_mass_forces_unit_interval() {
        // Arm Z=1 all on (D=0, Y=1); arm Z=0 all on (D=0, Y=0).
        let t = JointCounts::binary([5, 0, 0, 0, 0, 5, 0, 0]);
        let b = acde_bounds(&t, 0).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-15);
        assert!((b.upper - 1.0).abs() < 1e-15);
    }

    #[test]
    fn acde_uniform_interval() {
        let b = acde_bounds(&uniform_table(), 0).unwrap();
        assert!((b.lower + 0.5).abs() < 1e-15);
        assert!((b.upper - 0.5).abs() < 1e-15);
    }

    #[test]
    fn acde_sign_logic_tracks_u_stats() {
        let tables = [
            JointCounts::binary([4, 0, 0, 4, 0, 3, 7, 0]),
            JointCounts::binary([1, 2, 3, 4, 5, 6, 7, 8]),
            JointCounts::binary([6, 0, 0, 0, 0, 9, 0, 0]),
            JointCounts::binary([2, 9, 1, 1, 8, 1, 1, 3]),
        ];
        for t in &tables {
            for d in 0..2 {
                let b = acde_bounds(t, d).unwrap();
                assert_eq!(b.lower > 0.0, u_stat(t, d, 1).unwrap() > 1.0);
                assert_eq!(b.upper < 0.0, u_stat(t, d, 0).unwrap() > 1.0);
            }
        }
    }
}
