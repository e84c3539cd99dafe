//! Linear inequality description `A θ_p ≤ b` of stability, coefficient signs
//! and positive DC gains.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rc_model::N_PLANT;

/// Default absolute per-row feasibility tolerance.
pub const DEFAULT_FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    /// Stability of the denominator.
    G1,
    /// `q_hvac` numerator signs and DC gain.
    G2,
    /// `T_oa` numerator signs.
    G3,
    /// `eta_sol` numerator signs and DC gain.
    G4,
    /// Rows of a user-supplied set.
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub blocks: Vec<Block>,
}

impl ConstraintSet {
    /// Arbitrary constraint set over `a.ncols()` variables.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_len("b", a.nrows(), b.len())?;
        let blocks = vec![Block::Custom; a.nrows()];
        Ok(Self { a, b, blocks })
    }

    /// Unconstrained set over `n` variables.
    pub fn empty(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            blocks: vec![],
        }
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// `b - A θ` per row; negative entries are violations.
    pub fn slack(&self, theta: &[f64]) -> Result<DVector<f64>> {
        check_len("theta_p", self.dim(), theta.len())?;
        Ok(&self.b - &self.a * DVector::from_column_slice(theta))
    }

    pub fn max_violation(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.slack(theta)?.iter().fold(0.0_f64, |m, &s| m.max(-s)))
    }

    pub fn to_linear(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.a, &self.b)
    }
}

/// The fixed 15-row set. The implied rows `θ₂ − θ₁ ≤ 1` and
/// `−(θ₆ + θ₇ + θ₈) ≤ 0` are left out.
pub fn build_constraints() -> ConstraintSet {
    // (block, coefficients on 1-based θ indices, rhs)
    let rows: [(Block, &[(usize, f64)], f64); 15] = [
        (Block::G1, &[(1, -1.0)], 0.0),
        (Block::G1, &[(2, 1.0)], 0.0),
        (Block::G1, &[(2, -1.0)], 1.0),
        (Block::G1, &[(1, 1.0), (2, 1.0)], 1.0),
        (Block::G2, &[(3, 1.0)], 0.0),
        (Block::G2, &[(4, -1.0)], 0.0),
        (Block::G2, &[(5, -1.0)], 0.0),
        (Block::G2, &[(3, -1.0), (4, -1.0), (5, -1.0)], 0.0),
        (Block::G3, &[(6, -1.0)], 0.0),
        (Block::G3, &[(7, -1.0)], 0.0),
        (Block::G3, &[(8, -1.0)], 0.0),
        (Block::G4, &[(9, 1.0)], 0.0),
        (Block::G4, &[(10, -1.0)], 0.0),
        (Block::G4, &[(11, -1.0)], 0.0),
        (Block::G4, &[(9, -1.0), (10, -1.0), (11, -1.0)], 0.0),
    ];
    let mut a = DMatrix::zeros(rows.len(), N_PLANT);
    let mut b = DVector::zeros(rows.len());
    let mut blocks = Vec::with_capacity(rows.len());
    for (r, (block, coeffs, rhs)) in rows.iter().enumerate() {
        for &(j, v) in coeffs.iter() {
            a[(r, j - 1)] = v;
        }
        b[r] = *rhs;
        blocks.push(*block);
    }
    ConstraintSet { a, b, blocks }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowSlack {
    /// 1-based row number.
    pub row: usize,
    pub block: Block,
    /// `b - A θ` for this row.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub tol: f64,
    /// Rows with `slack < -tol`.
    pub violations: Vec<RowSlack>,
    /// Satisfied rows with `|slack| <= tol`.
    pub boundary: Vec<RowSlack>,
    pub max_violation: f64,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_feasible(c: &ConstraintSet, theta_p: &[f64], tol: f64) -> Result<FeasibilityReport> {
    if !(tol >= 0.0) {
        return Err(crate::error::domain("tol", "tolerance must be non-negative"));
    }
    let slack = c.slack(theta_p)?;
    let mut violations = vec![];
    let mut boundary = vec![];
    for (i, &s) in slack.iter().enumerate() {
        let entry = RowSlack {
            row: i + 1,
            block: c.blocks[i],
            slack: s,
        };
        if s < -tol {
            violations.push(entry);
        } else if s.abs() <= tol {
            boundary.push(entry);
        }
    }
    Ok(FeasibilityReport {
        tol,
        violations,
        boundary,
        max_violation: slack.iter().fold(0.0_f64, |m, &s| m.max(-s)),
    })
}

/// True iff none of the three input channels has an all-zero numerator.
pub fn is_physically_meaningful(theta_p: &[f64]) -> bool {
    theta_p.len() == N_PLANT && theta_p[2..].chunks(3).all(|c| c.iter().any(|v| v.abs() > 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub regular: bool,
    /// 1-based rows with `|slack| <= tol`.
    pub active_rows: Vec<usize>,
    pub gradient_rank: usize,
}

/// Linear independence of the active constraint gradients at `theta_p`.
pub fn check_regularity(c: &ConstraintSet, theta_p: &[f64], tol: f64) -> Result<RegularityReport> {
    let slack = c.slack(theta_p)?;
    let worst = slack.iter().fold(0.0_f64, |m, &s| m.max(-s));
    if worst > tol {
        return Err(Error::Infeasible { violation: worst, tol });
    }
    let active: Vec<usize> = (0..c.rows()).filter(|&i| slack[i].abs() <= tol).collect();
    if active.is_empty() {
        return Ok(RegularityReport {
            regular: true,
            active_rows: vec![],
            gradient_rank: 0,
        });
    }
    let grads = DMatrix::from_fn(active.len(), c.dim(), |r, j| c.a[(active[r], j)]);
    let rank = grads.rank(1e-10);
    Ok(RegularityReport {
        regular: rank == active.len(),
        active_rows: active.iter().map(|i| i + 1).collect(),
        gradient_rank: rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE_I: [f64; 11] = [
        1.98, -9.76e-1, -4.35e-3, 5.21e-5, 4.40e-3, 1.86e-5, 3.72e-5, 1.86e-5, -3.05e-2, 3.65e-4, 3.08e-2,
    ];

    #[test]
    fn fifteen_rows_in_four_blocks() {
        let c = build_constraints();
        assert_eq!((c.rows(), c.dim()), (15, 11));
        let count = |b| c.blocks.iter().filter(|&&x| x == b).count();
        assert_eq!([count(Block::G1), count(Block::G2), count(Block::G3), count(Block::G4)], [4, 4, 3, 4]);
    }

    #[test]
    fn origin_is_on_the_boundary() {
        let c = build_constraints();
        let r = check_feasible(&c, &[0.0; 11], 0.0).unwrap();
        assert!(r.is_feasible());
        assert_eq!(r.boundary.len(), 13);
    }

    #[test]
    fn table_one_rounding_violation() {
        let c = build_constraints();
        let strict = check_feasible(&c, &TABLE_I, 0.0).unwrap();
        assert_eq!(strict.violations.len(), 1);
        let v = strict.violations[0];
        assert_eq!((v.row, v.block), (4, Block::G1));
        assert!((v.slack + 4e-3).abs() < 1e-12);
        assert!(check_feasible(&c, &TABLE_I, 5e-3).unwrap().is_feasible());
        assert!(is_physically_meaningful(&TABLE_I));
    }

    #[test]
    fn positive_theta2_violates_row_two() {
        let mut th = [0.0; 11];
        th[1] = 0.1;
        let r = check_feasible(&build_constraints(), &th, 0.0).unwrap();
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].row, 2);
        assert!((r.max_violation - 0.1).abs() < 1e-15);
    }

    #[test]
    fn report_json_shape() {
        let mut th = [0.0; 11];
        th[1] = 0.5;
        let r = check_feasible(&build_constraints(), &th, 0.0).unwrap();
        let v = serde_json::to_value(&r.violations).unwrap();
        assert_eq!(v, serde_json::json!([{"row": 2, "block": "g1", "slack": -0.5}]));
    }

    #[test]
    fn meaningful_requires_each_channel() {
        let mut th = TABLE_I;
        th[2..5].fill(0.0);
        assert!(!is_physically_meaningful(&th));
        assert!(!is_physically_meaningful(&[0.0; 11]));
    }

    #[test]
    fn regularity_cases() {
        let c = build_constraints();
        let interior = [1.5, -0.6, -1.0, 0.1, 1.0, 0.1, 0.2, 0.1, -1.0, 0.1, 1.0];
        let r = check_regularity(&c, &interior, 1e-9).unwrap();
        assert!(r.regular && r.active_rows.is_empty());

        let mut face = interior;
        face[1] = -0.5;
        face[0] = 1.5;
        let r = check_regularity(&c, &face, 1e-9).unwrap();
        assert_eq!(r.active_rows, vec![4]);
        assert!(r.regular);

        let r = check_regularity(&c, &[0.0; 11], 1e-9).unwrap();
        assert!(!r.regular, "origin has 13 active rows in 11 dimensions");

        let mut bad = interior;
        bad[1] = 0.2;
        assert!(matches!(check_regularity(&c, &bad, 1e-9), Err(Error::Infeasible { .. })));
    }
}
