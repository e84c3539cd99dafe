//! Linear regression form `y = Phi theta` of the second-order model, the
//! disturbance selector, and simulation of the identified difference equation.
//!
//! Rows are indexed `i = 0..k_max-2`, corresponding to the 1-based sample
//! `k = i + 3`. `Phi = [Psi | I]` where `Psi` holds the eleven data columns
//! and the identity block carries the transformed disturbance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datagen::TimeSeriesDataset;
use crate::error::{check_len, Error, Result};
use crate::rc_model::{PlantParams, N_PLANT};

/// Largest `k_max` for which [`RegressionProblem::phi_dense`] materializes `Phi`.
pub const DENSE_PHI_LIMIT: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    /// Outputs `y[3..=k_max]`.
    pub y: DVector<f64>,
    /// The eleven regressor columns, `(k_max - 2) x 11`.
    pub psi: DMatrix<f64>,
    pub k_max: usize,
}

impl RegressionProblem {
    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn cols(&self) -> usize {
        self.rows() + N_PLANT
    }

    /// Dense `Phi`; `None` above [`DENSE_PHI_LIMIT`] samples.
    pub fn phi_dense(&self) -> Option<DMatrix<f64>> {
        if self.k_max > DENSE_PHI_LIMIT {
            return None;
        }
        let m = self.rows();
        let mut phi = DMatrix::zeros(m, m + N_PLANT);
        phi.columns_mut(0, N_PLANT).copy_from(&self.psi);
        for i in 0..m {
            phi[(i, N_PLANT + i)] = 1.0;
        }
        Some(phi)
    }

    /// `Phi theta` for the stacked vector `[theta_p; w_bar]`.
    pub fn apply(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("theta", self.cols(), theta.len())?;
        let tp = theta.rows(0, N_PLANT);
        Ok(&self.psi * tp + theta.rows(N_PLANT, self.rows()))
    }

    /// `Phi^T r`.
    pub fn apply_transpose(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("residual", self.rows(), r.len())?;
        let mut out = DVector::zeros(self.cols());
        out.rows_mut(0, N_PLANT).copy_from(&self.psi.tr_mul(r));
        out.rows_mut(N_PLANT, self.rows()).copy_from(r);
        Ok(out)
    }

    /// `y - Phi theta`.
    pub fn residual(&self, theta: &ThetaFull) -> Result<DVector<f64>> {
        Ok(&self.y - self.apply(&theta.to_vector())?)
    }
}

/// Builds `y` and `Phi` from a dataset.
pub fn build_regression(d: &TimeSeriesDataset) -> Result<RegressionProblem> {
    d.validate()?;
    let n = d.len();
    let m = n - 2;
    let y = DVector::from_fn(m, |i, _| d.t_z[i + 2]);
    let psi = DMatrix::from_fn(m, N_PLANT, |i, j| {
        let k = i + 2;
        match j {
            0 => d.t_z[k - 1],
            1 => d.t_z[k - 2],
            _ => {
                let ch = (j - 2) / 3;
                let lag = 2 - (j - 2) % 3;
                d.input(k - lag)[ch]
            }
        }
    });
    Ok(RegressionProblem { y, psi, k_max: n })
}

/// `S = [0 | I]`: picks the trailing `n_pen` coordinates out of
/// `n_free + n_pen`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selector {
    pub n_free: usize,
    pub n_pen: usize,
}

impl Selector {
    pub fn cols(&self) -> usize {
        self.n_free + self.n_pen
    }

    pub fn apply<'a>(&self, theta: &'a [f64]) -> Result<&'a [f64]> {
        check_len("theta", self.cols(), theta.len())?;
        Ok(&theta[self.n_free..])
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.n_pen, self.cols());
        for i in 0..self.n_pen {
            s[(i, self.n_free + i)] = 1.0;
        }
        s
    }
}

/// Selector for a `k_max`-sample regression problem.
pub fn selector_matrix(k_max: usize) -> Result<Selector> {
    if k_max < 3 {
        return Err(Error::TooShort {
            what: "k_max",
            min: 3,
            got: k_max,
        });
    }
    Ok(Selector {
        n_free: N_PLANT,
        n_pen: k_max - 2,
    })
}

/// `theta = [theta_p; w_bar]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFull {
    pub theta_p: PlantParams,
    pub w_bar: Vec<f64>,
}

impl ThetaFull {
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            N_PLANT + self.w_bar.len(),
            self.theta_p.theta.iter().chain(self.w_bar.iter()).copied(),
        )
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < N_PLANT {
            return Err(Error::TooShort {
                what: "theta",
                min: N_PLANT,
                got: v.len(),
            });
        }
        Ok(Self {
            theta_p: PlantParams::from_slice(&v[..N_PLANT])?,
            w_bar: v[N_PLANT..].to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionMode {
    /// Simulate the difference equation on its own past outputs.
    #[default]
    FreeRun,
    /// Use measured past outputs.
    OneStep,
}

/// Runs the identified model over the inputs of `d`.
///
/// The first two outputs are seeded from the measured `t_z`; the returned
/// series has the full dataset length.
pub fn predict(
    theta_p: &PlantParams,
    w_bar: &[f64],
    d: &TimeSeriesDataset,
    mode: PredictionMode,
) -> Result<Vec<f64>> {
    d.validate()?;
    let n = d.len();
    check_len("w_bar", n - 2, w_bar.len())?;
    let th = &theta_p.theta;
    let mut yhat = Vec::with_capacity(n);
    yhat.push(d.t_z[0]);
    yhat.push(d.t_z[1]);
    for k in 2..n {
        let (y1, y2) = match mode {
            PredictionMode::FreeRun => (yhat[k - 1], yhat[k - 2]),
            PredictionMode::OneStep => (d.t_z[k - 1], d.t_z[k - 2]),
        };
        let mut acc = th[0] * y1 + th[1] * y2;
        for lag in 0..3 {
            let u = d.input(k - 2 + lag);
            acc += th[2 + lag] * u[0] + th[5 + lag] * u[1] + th[8 + lag] * u[2];
        }
        yhat.push(acc + w_bar[k - 2]);
    }
    Ok(yhat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(n: usize) -> TimeSeriesDataset {
        TimeSeriesDataset {
            t_s: 0.1,
            q_hvac: (0..n).map(|k| (k as f64 * 0.7).sin()).collect(),
            t_oa: (0..n).map(|k| 20.0 + (k as f64 * 0.3).cos()).collect(),
            eta_sol: (0..n).map(|k| (k % 4) as f64 * 0.1).collect(),
            t_z: (0..n).map(|k| 22.0 + 0.1 * k as f64).collect(),
            q_int: None,
            t_ref: None,
        }
    }

    #[test]
    fn smallest_system() {
        let p = build_regression(&dataset(3)).unwrap();
        let phi = p.phi_dense().unwrap();
        assert_eq!((phi.nrows(), phi.ncols()), (1, 12));
        assert_eq!(phi[(0, 11)], 1.0);
    }

    #[test]
    fn row_layout_follows_regressor_order() {
        let d = dataset(6);
        let p = build_regression(&d).unwrap();
        let k = 4; // row i = 2 ↔ 1-based sample 5
        let row = p.psi.row(k - 2);
        assert_eq!(row[0], d.t_z[k - 1]);
        assert_eq!(row[1], d.t_z[k - 2]);
        assert_eq!([row[2], row[3], row[4]], [d.q_hvac[k - 2], d.q_hvac[k - 1], d.q_hvac[k]]);
        assert_eq!([row[5], row[6], row[7]], [d.t_oa[k - 2], d.t_oa[k - 1], d.t_oa[k]]);
        assert_eq!([row[8], row[9], row[10]], [d.eta_sol[k - 2], d.eta_sol[k - 1], d.eta_sol[k]]);
        assert_eq!(p.y[k - 2], d.t_z[k]);
    }

    #[test]
    fn dimensions_rank_and_identity_block() {
        let p = build_regression(&dataset(9)).unwrap();
        let phi = p.phi_dense().unwrap();
        assert_eq!(phi.ncols(), phi.nrows() + 11);
        assert!(phi.rank(1e-10) <= phi.nrows());
        let ident = phi.columns(11, phi.nrows());
        assert_eq!(ident.clone_owned(), DMatrix::identity(7, 7));
    }

    #[test]
    fn zero_dataset() {
        let mut d = dataset(5);
        for v in [&mut d.q_hvac, &mut d.t_oa, &mut d.eta_sol, &mut d.t_z] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        let p = build_regression(&d).unwrap();
        assert!(p.y.iter().all(|&v| v == 0.0));
        assert!(p.psi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_short() {
        assert!(build_regression(&dataset(2)).is_err());
        assert!(selector_matrix(2).is_err());
    }

    #[test]
    fn selector_properties() {
        let s = selector_matrix(5).unwrap();
        let m = s.to_matrix();
        assert_eq!((m.nrows(), m.ncols()), (3, 14));
        assert_eq!(&m * m.transpose(), DMatrix::identity(3, 3));
        for r in 0..3 {
            assert_eq!(m.row(r).iter().filter(|&&v| v == 1.0).count(), 1);
        }
        let theta: Vec<f64> = (0..14).map(|i| i as f64 * 1.5 - 3.0).collect();
        let tv = DVector::from_column_slice(&theta);
        assert_eq!((&m * tv).as_slice(), s.apply(&theta).unwrap());
    }

    #[test]
    fn matvecs_match_dense() {
        let p = build_regression(&dataset(12)).unwrap();
        let phi = p.phi_dense().unwrap();
        let theta = DVector::from_fn(p.cols(), |i, _| ((i * 7) % 5) as f64 - 2.0);
        assert!((phi.clone() * &theta - p.apply(&theta).unwrap()).amax() < 1e-12);
        let r = DVector::from_fn(p.rows(), |i, _| i as f64 * 0.5);
        assert!((phi.transpose() * &r - p.apply_transpose(&r).unwrap()).amax() < 1e-12);
    }

    #[test]
    fn zero_model_predicts_zero() {
        let d = dataset(8);
        let yhat = predict(&PlantParams::zeros(), &[0.0; 6], &d, PredictionMode::FreeRun).unwrap();
        assert_eq!(&yhat[..2], &d.t_z[..2]);
        assert!(yhat[2..].iter().all(|&v| v == 0.0));
        assert!(predict(&PlantParams::zeros(), &[0.0; 5], &d, PredictionMode::FreeRun).is_err());
    }

    #[test]
    fn wbar_perturbation_moves_single_row() {
        let p = build_regression(&dataset(10)).unwrap();
        let base = DVector::from_fn(p.cols(), |i, _| (i as f64).sin());
        let mut bumped = base.clone();
        bumped[11 + 4] += 0.25;
        let diff = p.apply(&bumped).unwrap() - p.apply(&base).unwrap();
        for (i, v) in diff.iter().enumerate() {
            let expect = if i == 4 { 0.25 } else { 0.0 };
            assert!((v - expect).abs() < 1e-14);
        }
    }
}
