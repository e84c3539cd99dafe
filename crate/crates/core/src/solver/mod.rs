//! Solver for `min ||y - Phi theta||² + lambda ||S theta||₁  s.t.  A theta_p <= b`.
//!
//! The problem is posed as a quadratic program, either with the split
//! `w = p - q, p, q >= 0` or with `w` kept whole and an ℓ1 proximal step, and
//! solved by relaxed ADMM with a cached factorization of the KKT matrix.
//! Approximate solutions are refined by an active-set polish and accepted
//! only after an independent check of the optimality conditions.

mod admm;
mod kkt;
mod linsys;
mod polish;
mod problem;

pub use kkt::{kkt_residual, kkt_residual_with, nnls, KktResidual, Tolerances, DEFAULT_ACTIVE_TOL};
pub use problem::{Design, SpdirProblem};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::error::{domain, Result};
use crate::rc_model::PlantParams;
use crate::regression::{RegressionProblem, Selector, ThetaFull};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    /// `w = p - q` with `p, q >= 0`: a quadratic program.
    #[default]
    Split,
    /// `w` as one block with a soft-thresholding step.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Threshold of the primal infeasibility certificate.
    pub eps_infeas: f64,
    /// Initial ADMM penalty.
    pub rho: f64,
    pub adaptive_rho: bool,
    /// Proximal regularization of the `x` step.
    pub sigma: f64,
    /// Relaxation parameter, in `[1, 2)`.
    pub over_relaxation: f64,
    pub formulation: Formulation,
    /// Column/row equilibration.
    pub scaling: bool,
    pub polish: bool,
    /// Iterations between termination checks.
    pub check_every: usize,
    /// Keep the per-iteration fixed-point residual.
    pub record_merit: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            eps_infeas: 1e-7,
            rho: 1.0,
            adaptive_rho: true,
            sigma: 1e-6,
            over_relaxation: 1.6,
            formulation: Formulation::Split,
            scaling: true,
            polish: true,
            check_every: 25,
            record_merit: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(domain("max_iter", "must be at least 1"));
        }
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0 && self.eps_infeas > 0.0) {
            return Err(domain("eps_abs", "tolerances must be positive"));
        }
        if !(self.rho > 0.0 && self.sigma > 0.0) {
            return Err(domain("rho", "penalty and proximal weights must be positive"));
        }
        if !(1.0..2.0).contains(&self.over_relaxation) {
            return Err(domain("over_relaxation", "must lie in [1, 2)"));
        }
        if self.check_every == 0 {
            return Err(domain("check_every", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxIter,
    InfeasibleDetected,
}

/// ADMM state carried from one solve to the next on the same problem.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub(crate) formulation: Formulation,
    pub(crate) x: DVector<f64>,
    pub(crate) z: DVector<f64>,
    pub(crate) y: DVector<f64>,
    pub(crate) rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub lambda: f64,
    /// Unpenalized coefficients (the plant parameters for SPDIR problems).
    pub theta_p: Vec<f64>,
    /// Penalized block `S theta`.
    pub w_bar: Vec<f64>,
    pub objective: f64,
    /// `||y - Phi theta||₂`
    pub residual_norm: f64,
    /// `||S theta||₁`
    pub solution_norm: f64,
    pub iterations: usize,
    pub status: Status,
    pub kkt: KktResidual,
    pub tolerances: Tolerances,
    /// Whether the returned point came from the active-set refinement.
    pub polished: bool,
    pub rho: f64,
    #[serde(skip)]
    pub merit: Vec<f64>,
    #[serde(skip)]
    pub warm_start: Option<WarmStart>,
}

impl SolverResult {
    pub fn theta(&self) -> Vec<f64> {
        self.theta_p.iter().chain(&self.w_bar).copied().collect()
    }

    /// Plant coefficients and transformed disturbance; fails unless the
    /// problem had eleven free variables.
    pub fn theta_full(&self) -> Result<ThetaFull> {
        Ok(ThetaFull {
            theta_p: PlantParams::from_slice(&self.theta_p)?,
            w_bar: self.w_bar.clone(),
        })
    }

    pub fn is_converged(&self) -> bool {
        self.status == Status::Converged
    }
}

/// Solves `p` at penalty `lambda`, optionally starting from a previous state.
pub fn solve(p: &SpdirProblem, lambda: f64, opts: &SolverOptions, warm: Option<&WarmStart>) -> Result<SolverResult> {
    admm::run(p, lambda, opts, warm)
}

/// SPDIR solve on a regression problem built from data.
pub fn solve_spdir(
    prob: &RegressionProblem,
    s: &Selector,
    c: &ConstraintSet,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<SolverResult> {
    solve(&SpdirProblem::from_regression(prob, s, c)?, lambda, opts, None)
}
