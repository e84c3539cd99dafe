//! The four identification scenarios: open or closed loop, with a
//! piecewise-constant or a smooth internal load.
//!
//! Training and validation weeks share the disturbance series and differ in
//! weather and excitation, so the training estimate of `w_bar` applies to
//! the validation week as well.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{
    generate_prbs, make_disturbance, simulate_closed_loop, simulate_open_loop, DisturbanceProfile, PiConfig,
    TimeSeriesDataset, WeatherConfig, ZohModel,
};
use crate::error::{domain, Error, Result};
use crate::rc_model::{build_state_space, RcParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    #[serde(rename = "OL-PW")]
    OlPw,
    #[serde(rename = "OL-NPW")]
    OlNpw,
    #[serde(rename = "CL-PW")]
    ClPw,
    #[serde(rename = "CL-NPW")]
    ClNpw,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [Self::OlPw, Self::OlNpw, Self::ClPw, Self::ClNpw];

    pub fn name(self) -> &'static str {
        match self {
            Self::OlPw => "OL-PW",
            Self::OlNpw => "OL-NPW",
            Self::ClPw => "CL-PW",
            Self::ClNpw => "CL-NPW",
        }
    }

    pub fn closed_loop(self) -> bool {
        matches!(self, Self::ClPw | Self::ClNpw)
    }

    pub fn piecewise(self) -> bool {
        matches!(self, Self::OlPw | Self::ClPw)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| domain("scenario", format!("unknown scenario {s:?}; expected OL-PW, OL-NPW, CL-PW or CL-NPW")))
    }
}

/// Two-level setpoint excitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrbsConfig {
    pub low: f64,
    pub high: f64,
    /// Samples per register bit.
    pub bit_period: usize,
}

impl Default for PrbsConfig {
    fn default() -> Self {
        Self {
            low: 22.0,
            high: 27.0,
            bit_period: 6,
        }
    }
}

/// Open-loop HVAC schedule: a feedforward against the nominal loads,
/// modulated by a binary excitation and clipped to the actuator range.
///
/// `q = -(1 ± excitation) (gain_toa (T_oa - target) + gain_sol eta + nominal(hour))`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenLoopConfig {
    pub target: f64,
    /// kW/°C
    pub gain_toa: f64,
    /// kW per kW/m²
    pub gain_sol: f64,
    /// Relative modulation depth.
    pub excitation: f64,
    pub bit_period: usize,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for OpenLoopConfig {
    fn default() -> Self {
        Self {
            target: 24.5,
            gain_toa: 1.0 / 6.0,
            gain_sol: 10.0,
            excitation: 0.4,
            bit_period: 6,
            u_min: -50.0,
            u_max: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub weather_train: u64,
    pub weather_valid: u64,
    pub disturbance: u64,
    pub excitation_train: u64,
    pub excitation_valid: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            weather_train: 11,
            weather_valid: 12,
            disturbance: 21,
            excitation_train: 31,
            excitation_valid: 32,
        }
    }
}

/// Named parameter sets for the truth plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RcPreset {
    #[default]
    Reference,
    Unit,
}

impl RcPreset {
    pub fn params(self) -> RcParams {
        match self {
            Self::Reference => RcParams::reference(),
            Self::Unit => RcParams::unit(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub rc_preset: RcPreset,
    /// Overrides `rc_preset` when present.
    pub rc: Option<RcParams>,
    /// Hours.
    pub t_s: f64,
    /// Samples per dataset.
    pub horizon: usize,
    /// Samples simulated and discarded before each dataset, so that the
    /// controller and wall temperature settle.
    pub warmup: usize,
    pub seeds: Seeds,
    pub pi: PiConfig,
    pub prbs: PrbsConfig,
    pub open_loop: OpenLoopConfig,
    pub weather: WeatherConfig,
    /// Load schedule; its `kind` is overridden by the scenario.
    pub disturbance: DisturbanceProfile,
    pub output_dir: Option<String>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::new(ScenarioKind::OlPw)
    }
}

impl ScenarioConfig {
    /// One week at five-minute sampling.
    pub fn new(scenario: ScenarioKind) -> Self {
        Self {
            scenario,
            rc_preset: RcPreset::Reference,
            rc: None,
            t_s: 1.0 / 12.0,
            horizon: 2016,
            warmup: 576,
            seeds: Seeds::default(),
            pi: PiConfig::default(),
            prbs: PrbsConfig::default(),
            open_loop: OpenLoopConfig::default(),
            weather: WeatherConfig::default(),
            disturbance: DisturbanceProfile::default(),
            output_dir: None,
        }
    }

    pub fn rc_params(&self) -> RcParams {
        self.rc.unwrap_or_else(|| self.rc_preset.params())
    }

    pub fn profile(&self) -> DisturbanceProfile {
        let mut p = self.disturbance.clone();
        p.kind = if self.scenario.piecewise() {
            crate::datagen::DisturbanceKind::PiecewiseConstant
        } else {
            crate::datagen::DisturbanceKind::Smooth
        };
        p
    }

    pub fn validate(&self) -> Result<()> {
        self.rc_params().validate()?;
        if !(self.t_s > 0.0 && self.t_s.is_finite()) {
            return Err(domain("t_s", "sampling period must be positive"));
        }
        if self.horizon < 3 {
            return Err(domain("horizon", "need at least 3 samples"));
        }
        self.pi.validate()?;
        if !(self.open_loop.u_min <= self.open_loop.u_max) {
            return Err(domain("open_loop.u_min", "actuator lower limit exceeds upper limit"));
        }
        if !(0.0..1.0).contains(&self.open_loop.excitation) {
            return Err(domain("open_loop.excitation", "must lie in [0, 1)"));
        }
        if self.open_loop.bit_period == 0 {
            return Err(domain("open_loop.bit_period", "must be at least one sample"));
        }
        Ok(())
    }
}

/// Training and validation data of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioData {
    pub config: ScenarioConfig,
    pub training: TimeSeriesDataset,
    pub validation: TimeSeriesDataset,
}

/// Nominal load of the schedule at time `hour` (no jitter).
fn nominal_load(p: &DisturbanceProfile, hour: f64) -> f64 {
    let hod = hour.rem_euclid(24.0);
    let day = (hour / 24.0).floor() as i64;
    if p.weekends_off && day.rem_euclid(7) >= 5 {
        return p.base;
    }
    p.schedule
        .iter()
        .take_while(|s| s.hour <= hod)
        .last()
        .map_or(p.base, |s| s.level)
}

fn week(cfg: &ScenarioConfig, w: &[f64], weather_seed: u64, excitation_seed: u64) -> Result<TimeSeriesDataset> {
    let rc = cfg.rc_params();
    let ss = build_state_space(&rc)?;
    let total = cfg.warmup + cfg.horizon;
    let (t_oa, eta) = cfg.weather.generate(total, cfg.t_s, weather_seed);
    let zoh = ZohModel::new(&ss, cfg.t_s)?;

    let full = if cfg.scenario.closed_loop() {
        let sp = generate_prbs(cfg.prbs.low, cfg.prbs.high, cfg.prbs.bit_period, total, excitation_seed)?;
        let x0 = zoh.steady_state([0.0, t_oa[0], eta[0]], w[0]);
        simulate_closed_loop(&ss, &t_oa, &eta, w, &sp, &cfg.pi, cfg.t_s, [x0[0], x0[1]])?
    } else {
        let ol = &cfg.open_loop;
        let profile = cfg.profile();
        let bits = generate_prbs(1.0 - ol.excitation, 1.0 + ol.excitation, ol.bit_period, total, excitation_seed)?;
        let q: Vec<f64> = (0..total)
            .map(|k| {
                let ff = ol.gain_toa * (t_oa[k] - ol.target) + ol.gain_sol * eta[k] + nominal_load(&profile, k as f64 * cfg.t_s);
                (-bits[k] * ff).clamp(ol.u_min, ol.u_max)
            })
            .collect();
        let x0 = zoh.steady_state([q[0], t_oa[0], eta[0]], w[0]);
        simulate_open_loop(&ss, &q, &t_oa, &eta, w, cfg.t_s, [x0[0], x0[1]])?
    };
    let cut = |v: &[f64]| v[cfg.warmup..].to_vec();
    Ok(TimeSeriesDataset {
        t_s: cfg.t_s,
        q_hvac: cut(&full.q_hvac),
        t_oa: cut(&full.t_oa),
        eta_sol: cut(&full.eta_sol),
        t_z: cut(&full.t_z),
        q_int: full.q_int.as_deref().map(cut),
        t_ref: full.t_ref.as_deref().map(cut),
    })
}

/// Simulates both weeks of a scenario.
pub fn generate(cfg: &ScenarioConfig) -> Result<ScenarioData> {
    cfg.validate()?;
    let total = cfg.warmup + cfg.horizon;
    // The warm-up precedes the shared week, so both runs see the same
    // disturbance during the recorded samples.
    let w = make_disturbance(&cfg.profile(), total, cfg.t_s, cfg.seeds.disturbance)?;
    let training = week(cfg, &w, cfg.seeds.weather_train, cfg.seeds.excitation_train)?;
    let validation = week(cfg, &w, cfg.seeds.weather_valid, cfg.seeds.excitation_valid)?;
    Ok(ScenarioData {
        config: cfg.clone(),
        training,
        validation,
    })
}
