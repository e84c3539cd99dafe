use nalgebra::{DMatrix, DVector};

use crate::constraints::ConstraintSet;
use crate::error::{check_len, Error, Result};
use crate::regression::{RegressionProblem, Selector};

/// Shape of the regression matrix `Phi`.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    /// Arbitrary `Phi`; the trailing `n_pen` columns are penalized.
    Dense(DMatrix<f64>),
    /// `Phi = [Psi | I]`; the identity columns are penalized.
    IdentityBlock(DMatrix<f64>),
}

/// `min ||y - Phi theta||² + lambda ||S theta||₁  s.t.  A theta_F <= b`, where
/// `theta = [theta_F; w]` and `S theta = w`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdirProblem {
    pub design: Design,
    pub y: DVector<f64>,
    pub n_free: usize,
    /// Constraints on `theta_F` only.
    pub constraints: ConstraintSet,
}

impl SpdirProblem {
    pub fn dense(phi: DMatrix<f64>, y: DVector<f64>, n_free: usize, constraints: ConstraintSet) -> Result<Self> {
        check_len("y", phi.nrows(), y.len())?;
        if n_free > phi.ncols() {
            return Err(Error::Precondition(format!(
                "{n_free} free variables but Phi has {} columns",
                phi.ncols()
            )));
        }
        check_len("constraint columns", n_free, constraints.dim())?;
        Ok(Self {
            design: Design::Dense(phi),
            y,
            n_free,
            constraints,
        })
    }

    pub fn identity_block(psi: DMatrix<f64>, y: DVector<f64>, constraints: ConstraintSet) -> Result<Self> {
        check_len("y", psi.nrows(), y.len())?;
        check_len("constraint columns", psi.ncols(), constraints.dim())?;
        Ok(Self {
            n_free: psi.ncols(),
            design: Design::IdentityBlock(psi),
            y,
            constraints,
        })
    }

    pub fn from_regression(prob: &RegressionProblem, s: &Selector, c: &ConstraintSet) -> Result<Self> {
        check_len("selector columns", prob.cols(), s.cols())?;
        check_len("selector rows", prob.rows(), s.n_pen)?;
        Self::identity_block(prob.psi.clone(), prob.y.clone(), c.clone())
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_vars(&self) -> usize {
        match &self.design {
            Design::Dense(phi) => phi.ncols(),
            Design::IdentityBlock(psi) => psi.ncols() + psi.nrows(),
        }
    }

    pub fn n_pen(&self) -> usize {
        self.n_vars() - self.n_free
    }

    /// `Phi theta`.
    pub fn apply(&self, theta: &[f64]) -> DVector<f64> {
        let (f, w) = theta.split_at(self.n_free);
        match &self.design {
            Design::Dense(phi) => phi * DVector::from_column_slice(theta),
            Design::IdentityBlock(psi) => psi * DVector::from_column_slice(f) + DVector::from_column_slice(w),
        }
    }

    /// `Phi^T r`.
    pub fn apply_t(&self, r: &DVector<f64>) -> DVector<f64> {
        match &self.design {
            Design::Dense(phi) => phi.tr_mul(r),
            Design::IdentityBlock(psi) => {
                let mut out = DVector::zeros(self.n_vars());
                out.rows_mut(0, self.n_free).copy_from(&psi.tr_mul(r));
                out.rows_mut(self.n_free, r.len()).copy_from(r);
                out
            }
        }
    }

    pub fn residual(&self, theta: &[f64]) -> DVector<f64> {
        &self.y - self.apply(theta)
    }

    /// `||y - Phi theta||² + lambda ||w||₁`.
    pub fn objective(&self, theta: &[f64], lambda: f64) -> f64 {
        self.residual(theta).norm_squared() + lambda * l1(&theta[self.n_free..])
    }

    pub(crate) fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_len("theta", self.n_vars(), theta.len())
    }
}

pub(crate) fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// Column- and row-equilibrated copy of a problem used by the iterations.
///
/// `theta = d ∘ x` and constraint rows are multiplied by `e`. Identity
/// columns already have unit norm, so their scale is one.
#[derive(Debug, Clone)]
pub(crate) struct Scaled {
    pub design: Design,
    pub y: DVector<f64>,
    pub n_free: usize,
    pub n_pen: usize,
    pub d: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Scaled {
    pub fn new(p: &SpdirProblem, enabled: bool) -> Self {
        let n = p.n_vars();
        let mut d = DVector::from_element(n, 1.0);
        if enabled {
            let cols = match &p.design {
                Design::Dense(phi) => phi.ncols(),
                Design::IdentityBlock(_) => p.n_free,
            };
            let m = match &p.design {
                Design::Dense(phi) | Design::IdentityBlock(phi) => phi,
            };
            for j in 0..cols {
                let norm = m.column(j).norm();
                if norm > 0.0 && norm.is_finite() {
                    d[j] = 1.0 / norm;
                }
            }
        }
        let design = match &p.design {
            Design::Dense(phi) => {
                let mut s = phi.clone();
                for (j, mut col) in s.column_iter_mut().enumerate() {
                    col *= d[j];
                }
                Design::Dense(s)
            }
            Design::IdentityBlock(psi) => {
                let mut s = psi.clone();
                for (j, mut col) in s.column_iter_mut().enumerate() {
                    col *= d[j];
                }
                Design::IdentityBlock(s)
            }
        };
        let (a0, b0) = p.constraints.to_linear();
        let mut a = a0.clone();
        for (j, mut col) in a.column_iter_mut().enumerate() {
            col *= d[j];
        }
        let mut b = b0.clone();
        for i in 0..a.nrows() {
            let norm = a.row(i).norm();
            if enabled && norm > 0.0 && norm.is_finite() {
                a.row_mut(i).scale_mut(1.0 / norm);
                b[i] /= norm;
            }
        }
        Self {
            design,
            y: p.y.clone(),
            n_free: p.n_free,
            n_pen: p.n_pen(),
            d,
            a,
            b,
        }
    }

    pub fn n_cons(&self) -> usize {
        self.a.nrows()
    }

    /// `Phi_hat x` for a direct-layout vector `x = [x_F; x_W]`.
    pub fn phi(&self, x_f: &DVector<f64>, x_w: &DVector<f64>) -> DVector<f64> {
        match &self.design {
            Design::Dense(phi) => {
                phi.columns(0, self.n_free) * x_f + phi.columns(self.n_free, self.n_pen) * x_w
            }
            Design::IdentityBlock(psi) => psi * x_f + x_w,
        }
    }

    /// `(Phi_F^T r, Phi_W^T r)`.
    pub fn phi_t(&self, r: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        match &self.design {
            Design::Dense(phi) => (
                phi.columns(0, self.n_free).tr_mul(r),
                phi.columns(self.n_free, self.n_pen).tr_mul(r),
            ),
            Design::IdentityBlock(psi) => (psi.tr_mul(r), r.clone()),
        }
    }

    pub fn unscale(&self, x_f: &DVector<f64>, x_w: &DVector<f64>) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.n_free + self.n_pen);
        theta.extend(x_f.iter().zip(self.d.iter()).map(|(x, d)| x * d));
        theta.extend(x_w.iter().zip(self.d.iter().skip(self.n_free)).map(|(x, d)| x * d));
        theta
    }

    #[cfg(test)]
    pub fn scale(&self, theta: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let x: Vec<f64> = theta.iter().zip(self.d.iter()).map(|(t, d)| t / d).collect();
        (
            DVector::from_column_slice(&x[..self.n_free]),
            DVector::from_column_slice(&x[self.n_free..]),
        )
    }

    /// Per-coordinate ℓ1 weights in scaled variables.
    pub fn pen_weights(&self, lambda: f64) -> DVector<f64> {
        DVector::from_iterator(self.n_pen, self.d.iter().skip(self.n_free).map(|d| lambda * d))
    }
}
