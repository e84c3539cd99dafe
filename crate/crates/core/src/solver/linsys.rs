//! Factorized solves with `K = P + sigma I + rho C^T C`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::problem::{Design, Scaled};
use super::Formulation;
use crate::error::{Error, Result};

pub(crate) enum LinSys {
    Dense {
        chol: Cholesky<f64, Dyn>,
    },
    /// Identity-block design: the `W` rows are eliminated and only an
    /// `n_free x n_free` Schur complement is factorized.
    Schur {
        chol: Cholesky<f64, Dyn>,
        a: f64,
    },
}

/// `Phi_tilde` for the chosen variable layout, materialized.
pub(crate) fn effective_design(s: &Scaled, form: Formulation) -> DMatrix<f64> {
    let phi = match &s.design {
        Design::Dense(phi) => phi.clone(),
        Design::IdentityBlock(psi) => {
            let m = psi.nrows();
            let mut phi = DMatrix::zeros(m, s.n_free + m);
            phi.columns_mut(0, s.n_free).copy_from(psi);
            phi.columns_mut(s.n_free, m).fill_with_identity();
            phi
        }
    };
    match form {
        Formulation::Direct => phi,
        Formulation::Split => {
            let (m, nf, np) = (phi.nrows(), s.n_free, s.n_pen);
            let mut out = DMatrix::zeros(m, nf + 2 * np);
            out.columns_mut(0, nf + np).copy_from(&phi);
            out.columns_mut(nf + np, np).copy_from(&(-phi.columns(nf, np)));
            out
        }
    }
}

fn factor(k: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(k).ok_or_else(|| Error::Precondition("KKT matrix is not positive definite".into()))
}

impl LinSys {
    pub fn new(s: &Scaled, form: Formulation, gram: Option<&DMatrix<f64>>, ata: &DMatrix<f64>, sigma: f64, rho: f64) -> Result<Self> {
        let nf = s.n_free;
        match (&s.design, gram) {
            (Design::IdentityBlock(_), Some(g)) => {
                let a = 2.0 + sigma + rho;
                let coef = match form {
                    Formulation::Split => 2.0 * (sigma + rho) / (4.0 + sigma + rho),
                    Formulation::Direct => 2.0 - 4.0 / a,
                };
                let mut k = g * coef + ata * rho;
                for i in 0..nf {
                    k[(i, i)] += sigma;
                }
                Ok(LinSys::Schur { chol: factor(k)?, a })
            }
            _ => {
                let pt = effective_design(s, form);
                let n = pt.ncols();
                let mut k = pt.tr_mul(&pt) * 2.0;
                for i in 0..n {
                    k[(i, i)] += sigma + if i >= nf { rho } else { 0.0 };
                }
                let mut kf = k.view_mut((0, 0), (nf, nf));
                kf += ata * rho;
                Ok(LinSys::Dense { chol: factor(k)? })
            }
        }
    }

    pub fn solve(&self, s: &Scaled, form: Formulation, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            LinSys::Dense { chol } => chol.solve(rhs),
            LinSys::Schur { chol, a } => {
                let Design::IdentityBlock(psi) = &s.design else {
                    unreachable!("Schur solve requires an identity-block design")
                };
                let (nf, m) = (s.n_free, s.n_pen);
                let r_f = rhs.rows(0, nf);
                let mut out = DVector::zeros(rhs.len());
                match form {
                    Formulation::Split => {
                        let rp = rhs.rows(nf, m);
                        let rq = rhs.rows(nf + m, m);
                        let diff = &rp - &rq;
                        let rhs_f = r_f - psi.tr_mul(&diff) * (2.0 / (a + 2.0));
                        let x_f = chol.solve(&rhs_f);
                        let sum = (&rp + &rq) / (a - 2.0);
                        let d = (diff - psi * &x_f * 4.0) / (a + 2.0);
                        out.rows_mut(0, nf).copy_from(&x_f);
                        out.rows_mut(nf, m).copy_from(&((&sum + &d) * 0.5));
                        out.rows_mut(nf + m, m).copy_from(&((sum - d) * 0.5));
                    }
                    Formulation::Direct => {
                        let rw = rhs.rows(nf, m);
                        let rhs_f = r_f - psi.tr_mul(&rw) * (2.0 / a);
                        let x_f = chol.solve(&rhs_f);
                        let w = (rw - psi * &x_f * 2.0) / *a;
                        out.rows_mut(0, nf).copy_from(&x_f);
                        out.rows_mut(nf, m).copy_from(&w);
                    }
                }
                out
            }
        }
    }
}
