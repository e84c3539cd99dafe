//! Continuous-time 2R2C zone/wall thermal model and its bilinear (Tustin)
//! discretization into the 11-coefficient transfer-function form.
//!
//! Units throughout: capacitances in kWh/°C, resistances in °C/kW, sampling
//! periods in hours, heat flows in kW, irradiance in kW/m².

use nalgebra::{Complex, Matrix2, Matrix2x3, RowVector2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Number of discrete plant coefficients.
pub const N_PLANT: usize = 11;

/// Default sampling period: five minutes.
pub const DEFAULT_TS_HOURS: f64 = 1.0 / 12.0;

/// Physical parameters of the 2R2C network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcParams {
    #[serde(rename = "Cz")]
    pub cz: f64,
    #[serde(rename = "Cw")]
    pub cw: f64,
    #[serde(rename = "Rz")]
    pub rz: f64,
    #[serde(rename = "Rw")]
    pub rw: f64,
    #[serde(rename = "Ae")]
    pub ae: f64,
}

impl RcParams {
    pub fn new(cz: f64, cw: f64, rz: f64, rw: f64, ae: f64) -> Result<Self> {
        let p = Self { cz, cw, rz, rw, ae };
        p.validate()?;
        Ok(p)
    }

    /// Stand-in truth plant: a small zone with a heavy envelope. Zone RC is
    /// 2 h and wall RC products are 20 h and 100 h, so `eps0` stays well below
    /// one at the default sampling period. Not a calibrated building.
    pub fn reference() -> Self {
        Self {
            cz: 2.0,
            cw: 20.0,
            rz: 1.0,
            rw: 5.0,
            ae: 10.0,
        }
    }

    /// All-ones plant, handy for hand-checked examples.
    pub fn unit() -> Self {
        Self {
            cz: 1.0,
            cw: 1.0,
            rz: 1.0,
            rw: 1.0,
            ae: 1.0,
        }
    }

    /// Checks strict positivity of every field. `Ae` may be zero only through
    /// [`RcParams::validate_allow_zero_area`].
    pub fn validate(&self) -> Result<()> {
        self.validate_allow_zero_area()?;
        positive("Ae", self.ae)
    }

    /// Same as [`RcParams::validate`] but tolerates a zero effective solar
    /// area, which simply switches the solar channel off.
    pub fn validate_allow_zero_area(&self) -> Result<()> {
        positive("Cz", self.cz)?;
        positive("Cw", self.cw)?;
        positive("Rz", self.rz)?;
        positive("Rw", self.rw)?;
        if !(self.ae >= 0.0) || !self.ae.is_finite() {
            return Err(domain("Ae", format!("must be non-negative, got {}", self.ae)));
        }
        Ok(())
    }

    /// Continuous denominator coefficients `(d1, d2)` of `s² + d1 s + d2`.
    pub fn denominator(&self) -> (f64, f64) {
        let d1 = 1.0 / (self.cz * self.rz) + (1.0 / self.rz + 1.0 / self.rw) / self.cw;
        let d2 = 1.0 / (self.cz * self.cw * self.rz * self.rw);
        (d1, d2)
    }

    /// `eps0 = -f22 * t_s`.
    pub fn eps0(&self, t_s: f64) -> f64 {
        t_s * (1.0 / self.rw + 1.0 / self.rz) / self.cw
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(domain(name, format!("must be strictly positive, got {v}")))
    }
}

/// Known input channels, in regression order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Qhvac,
    Toa,
    Etasol,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Qhvac, Channel::Toa, Channel::Etasol];

    /// Index of the first (lag-2) coefficient of this channel in `theta`.
    pub fn offset(self) -> usize {
        match self {
            Channel::Qhvac => 2,
            Channel::Toa => 5,
            Channel::Etasol => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Qhvac => "qhvac",
            Channel::Toa => "Toa",
            Channel::Etasol => "etasol",
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qhvac" => Ok(Channel::Qhvac),
            "toa" => Ok(Channel::Toa),
            "etasol" => Ok(Channel::Etasol),
            other => Err(domain("channel", format!("unknown channel `{other}`"))),
        }
    }
}

/// `x' = F x + G u + H w`, `y = J x` with state `[T_z, T_w]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousStateSpace {
    pub f: Matrix2<f64>,
    pub g: Matrix2x3<f64>,
    pub h: Vector2<f64>,
    pub j: RowVector2<f64>,
}

impl ContinuousStateSpace {
    /// `(d1, d2)` read off the state matrix: `d1 = -tr F`, `d2 = det F`.
    pub fn denominator(&self) -> (f64, f64) {
        (-self.f.trace(), self.f.determinant())
    }

    /// Steady-state zone temperature change per unit step of each input.
    pub fn dc_gains(&self) -> [f64; 3] {
        let (_, d2) = self.denominator();
        let f12 = self.f[(0, 1)];
        let f22 = self.f[(1, 1)];
        [
            -f22 * self.g[(0, 0)] / d2,
            f12 * self.g[(1, 1)] / d2,
            -f22 * self.g[(0, 2)] / d2,
        ]
    }

    /// Transfer function from `channel` to `T_z` evaluated at complex `s`.
    pub fn transfer(&self, channel: Channel, s: Complex<f64>) -> Complex<f64> {
        let (d1, d2) = self.denominator();
        let den = s * s + s * d1 + d2;
        let f12 = self.f[(0, 1)];
        let f22 = self.f[(1, 1)];
        let num = match channel {
            Channel::Qhvac => (s - f22) * self.g[(0, 0)],
            Channel::Toa => Complex::new(f12 * self.g[(1, 1)], 0.0),
            Channel::Etasol => (s - f22) * self.g[(0, 2)],
        };
        num / den
    }
}

/// Builds the continuous state-space realization of the 2R2C network.
pub fn build_state_space(p: &RcParams) -> Result<ContinuousStateSpace> {
    p.validate_allow_zero_area()?;
    let RcParams { cz, cw, rz, rw, ae } = *p;
    let f = Matrix2::new(
        -1.0 / (cz * rz),
        1.0 / (cz * rz),
        1.0 / (cw * rz),
        -(1.0 / rw + 1.0 / rz) / cw,
    );
    let g = Matrix2x3::new(1.0 / cz, 0.0, ae / cz, 0.0, 1.0 / (cw * rw), 0.0);
    let h = Vector2::new(1.0 / cz, 0.0);
    let j = RowVector2::new(1.0, 0.0);
    Ok(ContinuousStateSpace { f, g, h, j })
}

/// Largest sampling period (hours, exclusive) for which the discrete
/// coefficient signs are guaranteed.
pub fn sampling_bound(p: &RcParams) -> f64 {
    let RcParams { cz, cw, rz, rw, .. } = *p;
    let l = 2.0 * cw * rw * rz / (rz + rw);
    let m = 2.0 * (rz * cz * rw * cw).sqrt();
    let n = 2.0 / 3.0 * (rz * cz).min(rz * cw).min(rw * cw);
    l.min(m).min(n)
}

fn check_sampling(p: &RcParams, t_s: f64) -> Result<()> {
    p.validate_allow_zero_area()?;
    let bound = sampling_bound(p);
    if t_s > 0.0 && t_s < bound {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "sampling period {t_s} h must lie in (0, {bound}) h for this plant"
        )))
    }
}

/// The eleven discrete coefficients `theta_1..theta_11`, stored 0-based.
///
/// Layout: `[a1, a2, q(k-2), q(k-1), q(k), Toa(k-2), Toa(k-1), Toa(k),
/// sol(k-2), sol(k-1), sol(k)]` so that
/// `y[k] = a1 y[k-1] + a2 y[k-2] + sum_c sum_i theta_c,i u_c[k-2+i] + wbar[k]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlantParams {
    pub theta: [f64; N_PLANT],
}

impl PlantParams {
    pub fn new(theta: [f64; N_PLANT]) -> Self {
        Self { theta }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        crate::error::check_len("theta_p", N_PLANT, v.len())?;
        let mut theta = [0.0; N_PLANT];
        theta.copy_from_slice(v);
        Ok(Self { theta })
    }

    pub fn zeros() -> Self {
        Self {
            theta: [0.0; N_PLANT],
        }
    }

    pub fn a1(&self) -> f64 {
        self.theta[0]
    }

    pub fn a2(&self) -> f64 {
        self.theta[1]
    }

    /// Numerator coefficients of `channel` in lag order `[k-2, k-1, k]`.
    pub fn numerator(&self, channel: Channel) -> [f64; 3] {
        let o = channel.offset();
        [self.theta[o], self.theta[o + 1], self.theta[o + 2]]
    }

    pub fn dc_gain(&self, channel: Channel) -> f64 {
        let n: f64 = self.numerator(channel).iter().sum();
        n / (1.0 - self.theta[0] - self.theta[1])
    }

    /// Roots of `z² - a1 z - a2`.
    pub fn poles(&self) -> [Complex<f64>; 2] {
        let (a1, a2) = (self.theta[0], self.theta[1]);
        let disc = Complex::new(a1 * a1 + 4.0 * a2, 0.0).sqrt();
        [(disc + a1) * 0.5, (-disc + a1) * 0.5]
    }
}

/// Tustin image of the continuous model at sampling period `t_s`.
pub fn tustin_plant_params(p: &RcParams, t_s: f64) -> Result<PlantParams> {
    check_sampling(p, t_s)?;
    let ss = build_state_space(p)?;
    let (d1, d2) = p.denominator();
    let ts2 = t_s * t_s;
    let d0 = d2 * ts2 + 2.0 * d1 * t_s + 4.0;
    let f12 = ss.f[(0, 1)];
    let f22 = ss.f[(1, 1)];
    let g11 = ss.g[(0, 0)];
    let g13 = ss.g[(0, 2)];
    let g22 = ss.g[(1, 1)];

    let lag = [
        t_s * (-2.0 - f22 * t_s) / d0,
        t_s * (-2.0 * f22 * t_s) / d0,
        t_s * (2.0 - f22 * t_s) / d0,
    ];
    let toa = f12 * g22 * ts2 / d0;

    let mut theta = [0.0; N_PLANT];
    theta[0] = (8.0 - 2.0 * d2 * ts2) / d0;
    theta[1] = -(d2 * ts2 - 2.0 * d1 * t_s + 4.0) / d0;
    for i in 0..3 {
        theta[2 + i] = lag[i] * g11;
        theta[8 + i] = lag[i] * g13;
    }
    theta[5] = toa;
    theta[6] = 2.0 * toa;
    theta[7] = toa;
    Ok(PlantParams { theta })
}

/// Coefficients of the disturbance numerator `beta0 + beta1 z^-1 + beta2 z^-2`.
///
/// `scale = t_s / (Cz D0)`; the betas are `scale * [2 + eps0, 2 eps0, eps0 - 2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceCoeffs {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps0: f64,
    pub scale: f64,
}

impl DisturbanceCoeffs {
    pub fn from_scale(scale: f64, eps0: f64) -> Self {
        Self {
            beta0: scale * (2.0 + eps0),
            beta1: scale * 2.0 * eps0,
            beta2: scale * (eps0 - 2.0),
            eps0,
            scale,
        }
    }
}

pub fn tustin_disturbance_coeffs(p: &RcParams, t_s: f64) -> Result<DisturbanceCoeffs> {
    check_sampling(p, t_s)?;
    let (d1, d2) = p.denominator();
    let d0 = d2 * t_s * t_s + 2.0 * d1 * t_s + 4.0;
    Ok(DisturbanceCoeffs::from_scale(t_s / (p.cz * d0), p.eps0(t_s)))
}

/// Filters `w` through the disturbance numerator, producing `n - 2` samples
/// aligned with regression rows `k = 3..n` (1-based).
///
/// Evaluated as `scale * (2 (w[k] - w[k-2]) + eps0 ((w[k] + w[k-2]) + 2 w[k-1]))`,
/// algebraically equal to `beta0 w[k] + beta1 w[k-1] + beta2 w[k-2]`, so
/// constant stretches are computed without cancellation.
pub fn transform_disturbance(w: &[f64], c: &DisturbanceCoeffs) -> Result<Vec<f64>> {
    if w.len() < 3 {
        return Err(Error::TooShort {
            what: "disturbance",
            min: 3,
            got: w.len(),
        });
    }
    Ok(w.windows(3)
        .map(|win| {
            let (w2, w1, w0) = (win[0], win[1], win[2]);
            c.scale * (2.0 * (w0 - w2) + c.eps0 * ((w0 + w2) + 2.0 * w1))
        })
        .collect())
}
