use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceKind {
    PiecewiseConstant,
    Smooth,
}

/// A step in the daily occupancy schedule: from `hour` on, the load is `level` kW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadStep {
    pub hour: f64,
    pub level: f64,
}

/// Internal-gain generator: a weekly occupancy schedule with random jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisturbanceProfile {
    pub kind: DisturbanceKind,
    /// Load before the first step of each day (kW).
    pub base: f64,
    /// Daily schedule, sorted by hour.
    pub schedule: Vec<LoadStep>,
    /// Magnitude bound `w_u` (kW); generated samples never exceed it.
    pub w_u: f64,
    /// Each transition moves by up to this many samples, uniformly.
    pub jitter_steps: usize,
    /// Relative level perturbation, uniform in `[-x, x]`.
    pub level_jitter: f64,
    /// Saturday and Sunday stay at the base load.
    pub weekends_off: bool,
    /// Time constant (hours) of the first-order lag applied for
    /// [`DisturbanceKind::Smooth`].
    pub smoothing_hours: f64,
}

impl Default for DisturbanceProfile {
    fn default() -> Self {
        Self {
            kind: DisturbanceKind::PiecewiseConstant,
            base: 1.0,
            schedule: vec![
                LoadStep { hour: 8.0, level: 10.0 },
                LoadStep { hour: 12.0, level: 6.0 },
                LoadStep { hour: 13.0, level: 10.0 },
                LoadStep { hour: 18.0, level: 5.0 },
                LoadStep { hour: 20.0, level: 1.0 },
            ],
            w_u: 15.0,
            jitter_steps: 3,
            level_jitter: 0.15,
            weekends_off: false,
            smoothing_hours: 0.5,
        }
    }
}

impl DisturbanceProfile {
    pub fn smooth() -> Self {
        Self {
            kind: DisturbanceKind::Smooth,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.w_u >= 0.0) {
            return Err(domain("w_u", "bound must be non-negative"));
        }
        if self.schedule.windows(2).any(|s| s[0].hour > s[1].hour) {
            return Err(domain("schedule", "steps must be sorted by hour"));
        }
        if self.kind == DisturbanceKind::Smooth && !(self.smoothing_hours > 0.0) {
            return Err(domain("smoothing_hours", "must be positive for smooth profiles"));
        }
        Ok(())
    }
}

/// Internal heat gain series of length `n`.
pub fn make_disturbance(profile: &DisturbanceProfile, n: usize, t_s: f64, seed: u64) -> Result<Vec<f64>> {
    profile.validate()?;
    if !(t_s > 0.0) {
        return Err(domain("t_s", "sampling period must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clamp = |v: f64| v.clamp(-profile.w_u, profile.w_u);
    let per_day = (24.0 / t_s).round() as usize;
    let days = n.div_ceil(per_day.max(1)) + 1;

    let mut w = vec![clamp(profile.base); n];
    for day in 0..days {
        if profile.weekends_off && day % 7 >= 5 {
            continue;
        }
        let start = day * per_day;
        let mut steps: Vec<(usize, f64)> = profile
            .schedule
            .iter()
            .map(|s| {
                let nominal = start as i64 + (s.hour / t_s).round() as i64;
                let j = profile.jitter_steps as i64;
                let shift = if j > 0 { rng.gen_range(-j..=j) } else { 0 };
                // Returning to the base load is exact, so nights stay flat.
                let scale = if profile.level_jitter > 0.0 && s.level != profile.base {
                    1.0 + rng.gen_range(-profile.level_jitter..=profile.level_jitter)
                } else {
                    1.0
                };
                ((nominal + shift).max(start as i64) as usize, clamp(s.level * scale))
            })
            .collect();
        steps.sort_by_key(|s| s.0);
        for (i, &(at, level)) in steps.iter().enumerate() {
            let until = steps.get(i + 1).map_or(start + per_day, |s| s.0);
            for v in w.iter_mut().take(until.min(n)).skip(at.min(n)) {
                *v = level;
            }
        }
    }

    if profile.kind == DisturbanceKind::Smooth {
        w = first_order_lag(&w, profile.smoothing_hours / t_s);
    }
    Ok(w)
}

/// Convolution with the causal exponential kernel `(1 - a)^j a`, seeded at
/// `x[0]`. Levels are approached asymptotically, so samples keep changing for
/// many time constants after a step.
fn first_order_lag(x: &[f64], tau_steps: f64) -> Vec<f64> {
    let a = 1.0 - (-1.0 / tau_steps).exp();
    let mut state = x[0];
    x.iter()
        .map(|&v| {
            state += a * (v - state);
            state
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::change_frequency;

    #[test]
    fn three_changes_per_day() {
        let p = DisturbanceProfile {
            schedule: vec![
                LoadStep { hour: 8.0, level: 10.0 },
                LoadStep { hour: 12.0, level: 6.0 },
                LoadStep { hour: 18.0, level: 1.0 },
            ],
            jitter_steps: 0,
            level_jitter: 0.0,
            ..DisturbanceProfile::default()
        };
        let w = make_disturbance(&p, 288, 1.0 / 12.0, 0).unwrap();
        let cf = change_frequency(&w).unwrap();
        assert_eq!(cf, 3.0 / 287.0);
    }

    #[test]
    fn bounded_for_both_kinds() {
        let mut p = DisturbanceProfile {
            w_u: 9.0,
            level_jitter: 0.5,
            ..DisturbanceProfile::default()
        };
        for kind in [DisturbanceKind::PiecewiseConstant, DisturbanceKind::Smooth] {
            p.kind = kind;
            for seed in 0..5 {
                let w = make_disturbance(&p, 2016, 1.0 / 12.0, seed).unwrap();
                assert!(w.iter().all(|v| v.abs() <= p.w_u));
            }
        }
    }

    #[test]
    fn piecewise_changes_infrequently() {
        let w = make_disturbance(&DisturbanceProfile::default(), 2016, 1.0 / 12.0, 4).unwrap();
        let cf = change_frequency(&w).unwrap();
        assert!(cf > 0.0 && cf <= 0.02, "{cf}");
    }

    #[test]
    fn smooth_varies_during_business_hours() {
        let w = make_disturbance(&DisturbanceProfile::smooth(), 2016, 1.0 / 12.0, 4).unwrap();
        // Tuesday 08:00-18:00
        let day = 288;
        let cf = change_frequency(&w[day + 96..day + 216]).unwrap();
        assert!(cf > 0.95, "{cf}");
    }

    #[test]
    fn deterministic_per_seed() {
        let p = DisturbanceProfile::default();
        assert_eq!(make_disturbance(&p, 500, 0.1, 3).unwrap(), make_disturbance(&p, 500, 0.1, 3).unwrap());
        assert_ne!(make_disturbance(&p, 500, 0.1, 3).unwrap(), make_disturbance(&p, 500, 0.1, 4).unwrap());
    }
}
