use nalgebra::{Matrix2, Matrix2x4, SMatrix, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::TimeSeriesDataset;
use crate::error::{check_len, domain, Error, Result};
use crate::rc_model::ContinuousStateSpace;

/// Exact zero-order-hold discretization of the 2R2C state equation with the
/// stacked input `[q_hvac, T_oa, eta_sol, q_int]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZohModel {
    pub ad: Matrix2<f64>,
    pub bd: Matrix2x4<f64>,
    pub t_s: f64,
    ss: ContinuousStateSpace,
}

impl ZohModel {
    pub fn new(ss: &ContinuousStateSpace, t_s: f64) -> Result<Self> {
        if !(t_s > 0.0 && t_s.is_finite()) {
            return Err(domain("t_s", format!("sampling period must be positive, got {t_s}")));
        }
        let mut m = SMatrix::<f64, 6, 6>::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(&ss.f);
        m.fixed_view_mut::<2, 3>(0, 2).copy_from(&ss.g);
        m.fixed_view_mut::<2, 1>(0, 5).copy_from(&ss.h);
        let e = (m * t_s).exp();
        Ok(Self {
            ad: e.fixed_view::<2, 2>(0, 0).into_owned(),
            bd: e.fixed_view::<2, 4>(0, 2).into_owned(),
            t_s,
            ss: ss.clone(),
        })
    }

    pub fn step(&self, x: &Vector2<f64>, u: [f64; 3], w: f64) -> Vector2<f64> {
        self.ad * x + self.bd * Vector4::new(u[0], u[1], u[2], w)
    }

    /// Equilibrium state for constant inputs.
    pub fn steady_state(&self, u: [f64; 3], w: f64) -> Vector2<f64> {
        let forcing = self.ss.g * nalgebra::Vector3::from(u) + self.ss.h * w;
        // F is Hurwitz for valid parameters, hence invertible.
        -self.ss.f.try_inverse().unwrap_or_else(Matrix2::zeros) * forcing
    }

    pub fn output(&self, x: &Vector2<f64>) -> f64 {
        (self.ss.j * x)[0]
    }
}

/// PI controller with actuator limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiConfig {
    /// kW/°C
    pub kp: f64,
    /// kW/(°C·h)
    pub ki: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for PiConfig {
    /// Cooling-only preset tuned for [`crate::rc_model::RcParams::reference`].
    fn default() -> Self {
        Self {
            kp: 5.0,
            ki: 2.0,
            u_min: -50.0,
            u_max: 0.0,
        }
    }
}

impl PiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.u_min <= self.u_max) {
            return Err(domain("u_min", "actuator lower limit exceeds upper limit"));
        }
        if !(self.kp.is_finite() && self.ki.is_finite()) {
            return Err(domain("kp", "gains must be finite"));
        }
        Ok(())
    }
}

fn check_inputs(t_s: f64, n: usize, series: &[(&'static str, &[f64])]) -> Result<()> {
    if !(t_s > 0.0) {
        return Err(domain("t_s", "sampling period must be positive"));
    }
    if n < 3 {
        return Err(Error::TooShort {
            what: "simulation horizon",
            min: 3,
            got: n,
        });
    }
    for (what, s) in series {
        check_len(what, n, s.len())?;
    }
    Ok(())
}

/// Simulates the RC plant under given inputs; `y[k] = J x[k]` with `x[0] = x0`.
pub fn simulate_open_loop(
    ss: &ContinuousStateSpace,
    q_hvac: &[f64],
    t_oa: &[f64],
    eta_sol: &[f64],
    w: &[f64],
    t_s: f64,
    x0: [f64; 2],
) -> Result<TimeSeriesDataset> {
    let n = q_hvac.len();
    check_inputs(t_s, n, &[("t_oa", t_oa), ("eta_sol", eta_sol), ("q_int", w)])?;
    let zoh = ZohModel::new(ss, t_s)?;
    let mut x = Vector2::from(x0);
    let mut t_z = Vec::with_capacity(n);
    for k in 0..n {
        t_z.push(zoh.output(&x));
        x = zoh.step(&x, [q_hvac[k], t_oa[k], eta_sol[k]], w[k]);
    }
    Ok(TimeSeriesDataset {
        t_s,
        q_hvac: q_hvac.to_vec(),
        t_oa: t_oa.to_vec(),
        eta_sol: eta_sol.to_vec(),
        t_z,
        q_int: Some(w.to_vec()),
        t_ref: None,
    })
}

/// Simulates the plant with `q_hvac` computed by a PI loop tracking `setpoint`.
///
/// The integrator is frozen on samples where the actuator saturates.
#[allow(clippy::too_many_arguments)]
pub fn simulate_closed_loop(
    ss: &ContinuousStateSpace,
    t_oa: &[f64],
    eta_sol: &[f64],
    w: &[f64],
    setpoint: &[f64],
    pi: &PiConfig,
    t_s: f64,
    x0: [f64; 2],
) -> Result<TimeSeriesDataset> {
    pi.validate()?;
    let n = t_oa.len();
    check_inputs(t_s, n, &[("eta_sol", eta_sol), ("q_int", w), ("t_ref", setpoint)])?;
    let zoh = ZohModel::new(ss, t_s)?;
    let mut x = Vector2::from(x0);
    let mut integral = 0.0;
    let mut t_z = Vec::with_capacity(n);
    let mut q_hvac = Vec::with_capacity(n);
    for k in 0..n {
        let y = zoh.output(&x);
        let e = setpoint[k] - y;
        let raw = pi.kp * e + pi.ki * integral;
        let u = raw.clamp(pi.u_min, pi.u_max);
        if u == raw {
            integral += e * t_s;
        }
        t_z.push(y);
        q_hvac.push(u);
        x = zoh.step(&x, [u, t_oa[k], eta_sol[k]], w[k]);
    }
    Ok(TimeSeriesDataset {
        t_s,
        q_hvac,
        t_oa: t_oa.to_vec(),
        eta_sol: eta_sol.to_vec(),
        t_z,
        q_int: Some(w.to_vec()),
        t_ref: Some(setpoint.to_vec()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rc_model::{build_state_space, RcParams};

    fn reference() -> ContinuousStateSpace {
        build_state_space(&RcParams::reference()).unwrap()
    }

    #[test]
    fn ambient_equilibrium() {
        let ss = reference();
        let n = 500;
        let d = simulate_open_loop(&ss, &vec![0.0; n], &vec![24.0; n], &vec![0.0; n], &vec![0.0; n], 1.0 / 12.0, [24.0, 24.0])
            .unwrap();
        assert!(d.t_z.iter().all(|&y| (y - 24.0).abs() < 1e-10));
    }

    #[test]
    fn step_response_reaches_dc_gain() {
        let ss = reference();
        let gain = ss.dc_gains()[0];
        assert!((gain - 6.0).abs() < 1e-12);
        let n = 12 * 24 * 90;
        let d = simulate_open_loop(&ss, &vec![1.0; n], &vec![0.0; n], &vec![0.0; n], &vec![0.0; n], 1.0 / 12.0, [0.0, 0.0])
            .unwrap();
        assert!((d.t_z[n - 1] - gain).abs() < 1e-6, "{}", d.t_z[n - 1]);
    }

    #[test]
    fn split_runs_concatenate() {
        let ss = reference();
        let zoh = ZohModel::new(&ss, 0.1).unwrap();
        let n = 200;
        let u: Vec<[f64; 3]> = (0..n).map(|k| [-(k as f64 * 0.3).sin().abs() * 8.0, 26.0 + (k as f64 * 0.05).cos(), 0.3]).collect();
        let w: Vec<f64> = (0..n).map(|k| if k % 50 < 20 { 9.0 } else { 1.0 }).collect();
        let run = |x0: Vector2<f64>, range: std::ops::Range<usize>| {
            let mut x = x0;
            let mut ys = vec![];
            for k in range {
                ys.push(zoh.output(&x));
                x = zoh.step(&x, u[k], w[k]);
            }
            (ys, x)
        };
        let (full, _) = run(Vector2::new(25.0, 26.0), 0..n);
        let (mut a, xa) = run(Vector2::new(25.0, 26.0), 0..n / 2);
        let (b, _) = run(xa, n / 2..n);
        a.extend(b);
        for (p, q) in full.iter().zip(&a) {
            assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn steady_state_is_fixed_point() {
        let zoh = ZohModel::new(&reference(), 1.0 / 12.0).unwrap();
        let x = zoh.steady_state([-3.0, 30.0, 0.4], 5.0);
        let x1 = zoh.step(&x, [-3.0, 30.0, 0.4], 5.0);
        assert!((x - x1).amax() < 1e-10);
    }

    #[test]
    fn pi_removes_offset() {
        let ss = reference();
        let n = 12 * 24 * 10;
        let d = simulate_closed_loop(
            &ss,
            &vec![32.0; n],
            &vec![0.5; n],
            &vec![6.0; n],
            &vec![24.0; n],
            &PiConfig::default(),
            1.0 / 12.0,
            [28.0, 30.0],
        )
        .unwrap();
        assert!((d.t_z[n - 1] - 24.0).abs() < 0.01, "{}", d.t_z[n - 1]);
        assert!(d.q_hvac.iter().all(|&q| (-50.0..=0.0).contains(&q)));
    }

    #[test]
    fn zero_error_keeps_actuator_idle() {
        let ss = reference();
        let n = 100;
        let d = simulate_closed_loop(&ss, &vec![23.0; n], &vec![0.0; n], &vec![0.0; n], &vec![23.0; n], &PiConfig::default(), 0.1, [23.0, 23.0])
            .unwrap();
        assert!(d.q_hvac.iter().all(|&q| q.abs() < 1e-12));
        assert!(d.t_z.iter().all(|&y| (y - 23.0).abs() < 1e-10));
    }

    #[test]
    fn saturated_loop_is_open_loop() {
        let ss = reference();
        let n = 150;
        let t_oa: Vec<f64> = (0..n).map(|k| 25.0 + (k as f64 * 0.1).sin()).collect();
        let pi = PiConfig {
            u_min: 0.0,
            u_max: 0.0,
            ..PiConfig::default()
        };
        let cl = simulate_closed_loop(&ss, &t_oa, &vec![0.2; n], &vec![3.0; n], &vec![22.0; n], &pi, 0.1, [24.0, 25.0]).unwrap();
        let ol = simulate_open_loop(&ss, &vec![0.0; n], &t_oa, &vec![0.2; n], &vec![3.0; n], 0.1, [24.0, 25.0]).unwrap();
        assert_eq!(cl.t_z, ol.t_z);
    }

    #[test]
    fn length_mismatch() {
        let ss = reference();
        assert!(simulate_open_loop(&ss, &[0.0; 5], &[0.0; 4], &[0.0; 5], &[0.0; 5], 0.1, [0.0, 0.0]).is_err());
    }
}
