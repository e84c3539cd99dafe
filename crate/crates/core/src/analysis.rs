//! Identification quality metrics: parameter errors, frequency responses,
//! disturbance sparsity and prediction RMS.

use std::io::Write;
use std::path::Path;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, domain, Error, Result};
use crate::rc_model::{tustin_disturbance_coeffs, transform_disturbance, Channel, PlantParams, RcParams, N_PLANT};

/// Fraction of adjacent pairs that differ (exact comparison).
pub fn change_frequency(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::TooShort {
            what: "vector",
            min: 2,
            got: x.len(),
        });
    }
    Ok(count_changes(x) as f64 / (x.len() - 1) as f64)
}

fn count_changes(x: &[f64]) -> usize {
    x.windows(2).filter(|p| p[1] != p[0]).count()
}

fn count_outside(x: &[f64], epsilon: f64) -> usize {
    x.iter().filter(|v| v.abs() > epsilon).count()
}

/// Fraction of entries outside `[-epsilon, epsilon]`, and whether that
/// fraction is at most `f`.
pub fn eps_f_sparse(x: &[f64], epsilon: f64, f: f64) -> Result<(f64, bool)> {
    if !(epsilon >= 0.0) {
        return Err(domain("epsilon", "must be non-negative"));
    }
    if x.is_empty() {
        return Ok((0.0, true));
    }
    let frac = count_outside(x, epsilon) as f64 / x.len() as f64;
    Ok((frac, frac <= f))
}

/// Sparsity bound derived from the true disturbance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Bound {
    pub eps_bar: f64,
    /// `2 c_f(w)`.
    pub two_cf: f64,
    /// `max |w|` used as `w_u`.
    pub w_u: f64,
    /// Level changes in `w`.
    pub changes: usize,
    /// Entries of the transformed disturbance outside `[-eps_bar, eps_bar]`.
    pub count_outside: usize,
    /// `fraction_outside <= two_cf`.
    pub holds: bool,
    /// `count_outside <= 2 * changes`: the count the constructive argument
    /// actually bounds, free of the `n - 1` versus `n - 2` normalization.
    pub count_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub epsilon: f64,
    pub fraction_outside: f64,
    pub change_frequency: f64,
    pub prop1_bound: Option<Prop1Bound>,
}

/// Sparsity statistics of an arbitrary series at threshold `epsilon`.
pub fn sparsity_report(x: &[f64], epsilon: f64) -> Result<SparsityReport> {
    let (fraction_outside, _) = eps_f_sparse(x, epsilon, 1.0)?;
    Ok(SparsityReport {
        epsilon,
        fraction_outside,
        change_frequency: change_frequency(x)?,
        prop1_bound: None,
    })
}

/// Transforms `w` with the Tustin disturbance filter of `p` and counts the
/// entries beyond `4 t_s w_u eps0 / (Cz D0)` with `w_u = max |w|`.
///
/// The report's `change_frequency` refers to the transformed series; the
/// bound's `two_cf` to `w` itself.
pub fn prop1_check(w: &[f64], p: &RcParams, t_s: f64) -> Result<SparsityReport> {
    let coeffs = tustin_disturbance_coeffs(p, t_s)?;
    let w_bar = transform_disturbance(w, &coeffs)?;
    let w_u = w.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    // Same operation order as the transform on a constant window, so a
    // plateau at |w| = w_u lands exactly on the threshold.
    let eps_bar = coeffs.scale * (coeffs.eps0 * (4.0 * w_u));
    let changes = count_changes(w);
    let two_cf = 2.0 * change_frequency(w)?;
    let outside = count_outside(&w_bar, eps_bar);
    let fraction_outside = outside as f64 / w_bar.len() as f64;
    Ok(SparsityReport {
        epsilon: eps_bar,
        fraction_outside,
        change_frequency: change_frequency(&w_bar)?,
        prop1_bound: Some(Prop1Bound {
            eps_bar,
            two_cf,
            w_u,
            changes,
            count_outside: outside,
            holds: fraction_outside <= two_cf,
            count_holds: outside <= 2 * changes,
        }),
    })
}

/// Log-spaced grid from one cycle per ten weeks to the Nyquist frequency.
pub fn default_omega_grid(t_s: f64) -> Vec<f64> {
    let lo = 2.0 * std::f64::consts::PI / (10.0 * 7.0 * 24.0);
    let hi = std::f64::consts::PI / t_s;
    log_space(lo, hi, 200)
}

pub(crate) fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    pub channel: Channel,
    /// rad/h
    pub omegas: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

/// `G(z)` of one channel at `z = e^{j omega t_s}`.
pub fn discrete_transfer(theta_p: &PlantParams, channel: Channel, omega: f64, t_s: f64) -> Complex<f64> {
    let zi = Complex::from_polar(1.0, -omega * t_s);
    let zi2 = zi * zi;
    let [lag2, lag1, lag0] = theta_p.numerator(channel);
    let num = zi2 * lag2 + zi * lag1 + lag0;
    let den = Complex::new(1.0, 0.0) - zi * theta_p.a1() - zi2 * theta_p.a2();
    num / den
}

fn check_omegas(omegas: &[f64], t_s: f64) -> Result<()> {
    if !(t_s > 0.0) {
        return Err(domain("t_s", "sampling period must be positive"));
    }
    let nyquist = std::f64::consts::PI / t_s;
    match omegas.iter().find(|&&w| !(w > 0.0 && w <= nyquist * (1.0 + 1e-12))) {
        Some(w) => Err(domain("omega", format!("{w} rad/h outside (0, {nyquist}]"))),
        None => Ok(()),
    }
}

pub fn frequency_response(theta_p: &PlantParams, channel: Channel, omegas: &[f64], t_s: f64) -> Result<FrequencyResponse> {
    check_omegas(omegas, t_s)?;
    Ok(FrequencyResponse {
        channel,
        omegas: omegas.to_vec(),
        magnitudes: omegas.iter().map(|&w| discrete_transfer(theta_p, channel, w, t_s).norm()).collect(),
    })
}

/// True when the numerator of `channel` at `omega` is zero up to the rounding
/// of its three terms.
fn vanishes(theta_p: &PlantParams, channel: Channel, omega: f64, t_s: f64) -> bool {
    let zi = Complex::from_polar(1.0, -omega * t_s);
    let c = theta_p.numerator(channel);
    let num = zi * zi * c[0] + zi * c[1] + c[2];
    let scale: f64 = c.iter().map(|v| v.abs()).sum();
    num.norm() <= 64.0 * f64::EPSILON * scale
}

/// `max_omega |G_hat - G| / |G|` and the maximizing frequency. Grid points
/// where `|G| = 0` (numerator zero to rounding) are skipped.
pub fn max_relative_fr_error(
    theta_true: &PlantParams,
    theta_hat: &PlantParams,
    channel: Channel,
    omegas: &[f64],
    t_s: f64,
) -> Result<(f64, f64)> {
    check_omegas(omegas, t_s)?;
    let mut best = (0.0, f64::NAN);
    for &w in omegas {
        let g = discrete_transfer(theta_true, channel, w, t_s);
        if g.norm() == 0.0 || vanishes(theta_true, channel, w, t_s) {
            log::warn!("true response of {} vanishes at {w} rad/h; point skipped", channel.name());
            continue;
        }
        let err = (discrete_transfer(theta_hat, channel, w, t_s) - g).norm() / g.norm();
        if err > best.0 || best.1.is_nan() {
            best = (err, w);
        }
    }
    Ok(best)
}

/// Coefficient signs of a Tustin-discretized plant: `+1` or `-1` per
/// coefficient, 0-based.
pub const SIGN_PATTERN: [f64; N_PLANT] = [1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 1.0, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignCheck {
    pub tol: f64,
    /// 1-based indices with the wrong sign beyond `tol`.
    pub wrong: Vec<usize>,
    /// 1-based indices with `|theta| <= tol`.
    pub zero: Vec<usize>,
}

impl SignCheck {
    /// No coefficient has the wrong sign; zeros allowed.
    pub fn matches(&self) -> bool {
        self.wrong.is_empty()
    }

    pub fn strict(&self) -> bool {
        self.wrong.is_empty() && self.zero.is_empty()
    }
}

pub fn sign_check(theta_p: &PlantParams, tol: f64) -> SignCheck {
    let mut out = SignCheck {
        tol,
        wrong: vec![],
        zero: vec![],
    };
    for (i, (&t, &s)) in theta_p.theta.iter().zip(SIGN_PATTERN.iter()).enumerate() {
        if t.abs() <= tol {
            out.zero.push(i + 1);
        } else if t * s < 0.0 {
            out.wrong.push(i + 1);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamErrorRow {
    /// 1-based coefficient index.
    pub index: usize,
    pub theta: f64,
    pub theta_hat: f64,
    /// `(theta - theta_hat) / theta * 100`; `None` when `theta == 0`.
    pub percent_error: Option<f64>,
}

pub fn param_error_table(theta_true: &PlantParams, theta_hat: &PlantParams) -> Vec<ParamErrorRow> {
    theta_true
        .theta
        .iter()
        .zip(theta_hat.theta.iter())
        .enumerate()
        .map(|(i, (&t, &h))| ParamErrorRow {
            index: i + 1,
            theta: t,
            theta_hat: h,
            percent_error: (t != 0.0).then(|| (t - h) / t * 100.0),
        })
        .collect()
}

pub fn rms_error(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_len("y_hat", y.len(), y_hat.len())?;
    if y.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((ss / y.len() as f64).sqrt())
}

/// Magnitude comparison of all three channels, one row per channel and
/// frequency.
pub fn write_bode_csv<W: Write>(
    theta_true: &PlantParams,
    theta_hat: &PlantParams,
    omegas: &[f64],
    t_s: f64,
    out: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["omega_rad_per_h", "channel", "mag_true", "mag_est"])?;
    for ch in Channel::ALL {
        let t = frequency_response(theta_true, ch, omegas, t_s)?;
        let e = frequency_response(theta_hat, ch, omegas, t_s)?;
        for i in 0..omegas.len() {
            wtr.write_record([
                omegas[i].to_string(),
                ch.name().to_string(),
                t.magnitudes[i].to_string(),
                e.magnitudes[i].to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_bode_csv_file(
    theta_true: &PlantParams,
    theta_hat: &PlantParams,
    omegas: &[f64],
    t_s: f64,
    path: &Path,
) -> Result<()> {
    let mut buf = Vec::new();
    write_bode_csv(theta_true, theta_hat, omegas, t_s, &mut buf)?;
    crate::io::write_atomic(path, &buf)
}
