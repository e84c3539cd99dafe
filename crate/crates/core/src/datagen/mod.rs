//! Synthetic scenario data: excitation signals, weather, occupancy loads,
//! exact zero-order-hold simulation of the RC truth model, and CSV I/O.

mod csv_io;
mod disturbance;
mod prbs;
mod simulate;
mod weather;

pub use csv_io::{load_csv, read_csv, write_csv, write_csv_to};
pub use disturbance::{make_disturbance, DisturbanceKind, DisturbanceProfile, LoadStep};
pub use prbs::{generate_prbs, Lfsr};
pub use simulate::{simulate_closed_loop, simulate_open_loop, PiConfig, ZohModel};
pub use weather::{synth_weather, WeatherConfig};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Uniformly sampled building data. Index 0 is sample `k = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesDataset {
    /// Sampling period in hours.
    pub t_s: f64,
    /// HVAC heat gain (kW, negative when cooling).
    pub q_hvac: Vec<f64>,
    /// Outside air temperature (°C).
    pub t_oa: Vec<f64>,
    /// Solar irradiance (kW/m²).
    pub eta_sol: Vec<f64>,
    /// Zone temperature (°C).
    pub t_z: Vec<f64>,
    /// True internal heat gain (kW), when known.
    pub q_int: Option<Vec<f64>>,
    /// Zone setpoint (°C), closed-loop runs only.
    pub t_ref: Option<Vec<f64>>,
}

impl TimeSeriesDataset {
    pub fn len(&self) -> usize {
        self.t_z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_z.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_s > 0.0) {
            return Err(crate::error::domain(
                "t_s",
                format!("sampling period must be positive, got {}", self.t_s),
            ));
        }
        let n = self.len();
        if n < 3 {
            return Err(Error::TooShort {
                what: "dataset",
                min: 3,
                got: n,
            });
        }
        check_len("q_hvac", n, self.q_hvac.len())?;
        check_len("t_oa", n, self.t_oa.len())?;
        check_len("eta_sol", n, self.eta_sol.len())?;
        if let Some(w) = &self.q_int {
            check_len("q_int", n, w.len())?;
        }
        if let Some(r) = &self.t_ref {
            check_len("t_ref", n, r.len())?;
        }
        Ok(())
    }

    /// Input sample `k` (0-based) as `[q_hvac, T_oa, eta_sol]`.
    pub fn input(&self, k: usize) -> [f64; 3] {
        [self.q_hvac[k], self.t_oa[k], self.eta_sol[k]]
    }
}
