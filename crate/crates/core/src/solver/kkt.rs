use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::problem::SpdirProblem;
use crate::error::Result;

/// Rows with slack at most this are treated as active when fitting
/// multipliers.
pub const DEFAULT_ACTIVE_TOL: f64 = 1e-6;

/// First-order optimality measures of a candidate point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    /// Largest constraint violation `max(A theta_F - b, 0)`.
    pub primal_inf: f64,
    /// `max(dual_inf_free, dual_inf_pen)`.
    pub dual_inf: f64,
    /// `||2 Phi_F^T (Phi theta - y) + A^T mu||∞` with the best `mu >= 0`.
    pub dual_inf_free: f64,
    /// Distance of `-2 Phi_W^T (Phi theta - y)` from `lambda ∂||w||₁`, ∞-norm.
    pub dual_inf_pen: f64,
    /// `sum mu_i |slack_i|`.
    pub duality_gap_estimate: f64,
    /// Fitted multipliers, one per constraint row.
    pub multipliers: Vec<f64>,
}

/// Multiple of machine epsilon, relative to `Phi^T y`, below which
/// stationarity residuals are indistinguishable from rounding.
const ROUNDING_FLOOR: f64 = 1e3;

/// Acceptance thresholds for [`KktResidual`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub primal: f64,
    pub dual_free: f64,
    pub dual_pen: f64,
    pub gap: f64,
}

impl Tolerances {
    /// Absolute plus relative thresholds. Stationarity is measured against
    /// the gradient of the residual and `lambda`, which are the terms that
    /// cancel at an optimum, with a rounding floor from the raw products.
    pub fn new(p: &SpdirProblem, lambda: f64, theta: &[f64], eps_abs: f64, eps_rel: f64) -> Self {
        let nf = p.n_free;
        let (a, b) = p.constraints.to_linear();
        let ax = a * DVector::from_column_slice(&theta[..nf]);
        let fit = p.apply(theta);
        let g_fit = p.apply_t(&fit) * 2.0;
        let g_y = p.apply_t(&p.y) * 2.0;
        let g_r = p.apply_t(&(&p.y - &fit)) * 2.0;
        let inf = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let (gf, gw) = g_fit.as_slice().split_at(nf);
        let (yf, yw) = g_y.as_slice().split_at(nf);
        let (rf, rw) = g_r.as_slice().split_at(nf);
        let floor = ROUNDING_FLOOR * f64::EPSILON;
        Self {
            primal: eps_abs + eps_rel * inf(ax.as_slice()).max(inf(b.as_slice())),
            dual_free: eps_abs + eps_rel * inf(rf) + floor * inf(gf).max(inf(yf)),
            dual_pen: eps_abs + eps_rel * inf(rw).max(lambda) + floor * inf(gw).max(inf(yw)),
            gap: eps_abs + eps_rel * p.objective(theta, lambda),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            primal: self.primal * factor,
            dual_free: self.dual_free * factor,
            dual_pen: self.dual_pen * factor,
            gap: self.gap * factor,
        }
    }

    pub fn accepts(&self, k: &KktResidual) -> bool {
        k.primal_inf <= self.primal
            && k.dual_inf_free <= self.dual_free
            && k.dual_inf_pen <= self.dual_pen
            && k.duality_gap_estimate <= self.gap
    }

    /// Largest ratio of residual to threshold; below one means accepted.
    pub fn ratio(&self, k: &KktResidual) -> f64 {
        (k.primal_inf / self.primal)
            .max(k.dual_inf_free / self.dual_free)
            .max(k.dual_inf_pen / self.dual_pen)
            .max(k.duality_gap_estimate / self.gap)
    }
}

/// Optimality residuals of `theta` for the penalized problem at `lambda`.
pub fn kkt_residual(p: &SpdirProblem, lambda: f64, theta: &[f64]) -> Result<KktResidual> {
    kkt_residual_with(p, lambda, theta, DEFAULT_ACTIVE_TOL)
}

pub fn kkt_residual_with(p: &SpdirProblem, lambda: f64, theta: &[f64], active_tol: f64) -> Result<KktResidual> {
    p.check_theta(theta)?;
    let nf = p.n_free;
    let slack = p.constraints.slack(&theta[..nf])?;
    let primal_inf = slack.iter().fold(0.0_f64, |m, &s| m.max(-s));

    let g = p.apply_t(&(p.apply(theta) - &p.y)) * 2.0;

    let mut dual_inf_pen = 0.0_f64;
    for (gi, wi) in g.iter().skip(nf).zip(&theta[nf..]) {
        let r = if *wi != 0.0 {
            (gi + lambda * wi.signum()).abs()
        } else {
            (gi.abs() - lambda).max(0.0)
        };
        dual_inf_pen = dual_inf_pen.max(r);
    }

    let active: Vec<usize> = (0..slack.len()).filter(|&i| slack[i] <= active_tol).collect();
    let g_f = g.rows(0, nf).into_owned();
    let a = &p.constraints.a;
    let mut multipliers = vec![0.0; slack.len()];
    let station = if active.is_empty() {
        g_f
    } else {
        let e = DMatrix::from_fn(nf, active.len(), |r, c| a[(active[c], r)]);
        let mu = nnls(&e, &(-&g_f));
        for (k, &row) in active.iter().enumerate() {
            multipliers[row] = mu[k];
        }
        g_f + e * mu
    };
    let duality_gap_estimate = multipliers.iter().zip(slack.iter()).map(|(m, s)| m * s.abs()).sum();
    let dual_inf_free = station.amax();
    Ok(KktResidual {
        primal_inf,
        dual_inf: dual_inf_free.max(dual_inf_pen),
        dual_inf_free,
        dual_inf_pen,
        duality_gap_estimate,
        multipliers,
    })
}

/// Lawson–Hanson non-negative least squares: `min ||E x - f||₂, x >= 0`.
pub fn nnls(e: &DMatrix<f64>, f: &DVector<f64>) -> DVector<f64> {
    let n = e.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = e.amax().max(f.amax()).max(1.0);
    let tol = 1e-12 * scale * scale * (e.nrows().max(n) as f64);

    for _ in 0..3 * n + 10 {
        let w = e.tr_mul(&(f - e * &x));
        let candidate = (0..n).filter(|&j| !passive[j] && w[j] > tol).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            let z = restricted_ls(e, f, &passive);
            if (0..n).all(|j| !passive[j] || z[j] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for j in 0..n {
                if passive[j] && z[j] <= 0.0 {
                    let denom = x[j] - z[j];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            x += (z - &x) * alpha.min(1.0);
            for j in 0..n {
                if passive[j] && x[j] <= tol {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

fn restricted_ls(e: &DMatrix<f64>, f: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..passive.len()).filter(|&j| passive[j]).collect();
    let mut z = DVector::zeros(passive.len());
    if cols.is_empty() {
        return z;
    }
    let sub = DMatrix::from_fn(e.nrows(), cols.len(), |r, c| e[(r, cols[c])]);
    let sol = lstsq(&sub, f);
    for (k, &j) in cols.iter().enumerate() {
        z[j] = sol[k];
    }
    z
}

/// Minimum-norm least-squares solution via SVD.
pub(crate) fn lstsq(m: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(m.ncols());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.amax();
    let eps = smax * 1e-13 * (m.nrows().max(m.ncols()) as f64);
    svd.solve(rhs, eps).unwrap_or_else(|_| DVector::zeros(m.ncols()))
}
