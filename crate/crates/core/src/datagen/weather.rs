use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Parameters of the synthetic hot-humid-climate weather generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherConfig {
    pub toa_mean: f64,
    pub toa_amplitude: f64,
    /// Hour of the daily temperature maximum.
    pub toa_peak_hour: f64,
    /// AR(1) coefficient per hour of the temperature noise.
    pub ar_coeff_per_hour: f64,
    /// Stationary standard deviation of the temperature noise (°C).
    pub ar_std: f64,
    /// Clear-sky noon irradiance (kW/m²).
    pub sol_peak: f64,
    /// Probability that a given hour is cloudy.
    pub cloud_probability: f64,
    /// Irradiance multiplier range during cloudy hours.
    pub cloud_factor: (f64, f64),
}

impl Default for WeatherConfig {
    fn default() -> Self {
        Self {
            toa_mean: 28.0,
            toa_amplitude: 4.5,
            toa_peak_hour: 15.0,
            ar_coeff_per_hour: 0.9,
            ar_std: 0.8,
            sol_peak: 0.85,
            cloud_probability: 0.25,
            cloud_factor: (0.2, 0.7),
        }
    }
}

impl WeatherConfig {
    /// Outside temperature and solar irradiance series of length `n`.
    pub fn generate(&self, n: usize, t_s: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = self.ar_coeff_per_hour.powf(t_s);
        let innov = self.ar_std * (1.0 - phi * phi).max(0.0).sqrt();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");

        let mut toa = Vec::with_capacity(n);
        let mut sol = Vec::with_capacity(n);
        let mut noise = self.ar_std * normal.sample(&mut rng);
        let mut hour_index = usize::MAX;
        let mut cloud = 1.0;
        for k in 0..n {
            let h = k as f64 * t_s;
            let hod = h % 24.0;
            toa.push(
                self.toa_mean + self.toa_amplitude * (2.0 * PI * (hod - self.toa_peak_hour + 6.0) / 24.0).sin() + noise,
            );
            noise = phi * noise + innov * normal.sample(&mut rng);

            let this_hour = h.floor() as usize;
            if this_hour != hour_index {
                hour_index = this_hour;
                cloud = if rng.gen::<f64>() < self.cloud_probability {
                    rng.gen_range(self.cloud_factor.0..=self.cloud_factor.1)
                } else {
                    1.0
                };
            }
            let clear = self.sol_peak * (2.0 * PI * (hod - 6.0) / 24.0).sin();
            sol.push(clear.max(0.0) * cloud);
        }
        (toa, sol)
    }
}

/// Synthetic `(T_oa, eta_sol)` with the default configuration.
pub fn synth_weather(n: usize, t_s: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    WeatherConfig::default().generate(n, t_s, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn daily_means(x: &[f64], per_day: usize) -> Vec<f64> {
        x.chunks(per_day).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
    }

    #[test]
    fn irradiance_is_nonnegative_and_deterministic() {
        for seed in 0..5 {
            let (toa, sol) = synth_weather(600, 1.0 / 12.0, seed);
            assert!(sol.iter().all(|&v| v >= 0.0));
            assert_eq!((toa.clone(), sol.clone()), synth_weather(600, 1.0 / 12.0, seed));
        }
    }

    #[test]
    fn week_has_seven_diurnal_cycles() {
        let (_, sol) = synth_weather(2016, 1.0 / 12.0, 1);
        let sunrises = sol.windows(2).filter(|w| w[0] == 0.0 && w[1] > 0.0).count();
        assert_eq!(sunrises, 7);
    }

    #[test]
    fn seeds_differ_but_share_daily_structure() {
        let (a_t, a_s) = synth_weather(2016, 1.0 / 12.0, 11);
        let (b_t, b_s) = synth_weather(2016, 1.0 / 12.0, 12);
        assert_ne!(a_t, b_t);
        for (x, y) in daily_means(&a_t, 288).iter().zip(daily_means(&b_t, 288)) {
            assert!((x - y).abs() <= 0.2 * x.abs(), "{x} vs {y}");
        }
        let (ma, mb) = (daily_means(&a_s, 2016)[0], daily_means(&b_s, 2016)[0]);
        assert!((ma - mb).abs() <= 0.2 * ma, "{ma} vs {mb}");
    }
}
