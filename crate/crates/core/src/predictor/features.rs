//! Predictor inputs.
//!
//! A feature vector is built from daily means, so one predictor serves
//! scenarios at any step length that divides a day. With `spd` steps per
//! day, a window at step `t` covers:
//!
//! * the past `w` days, steps `[t - w·spd, t)`, oldest first, for
//!   temperature, precipitation, river flow and normalised storage;
//! * the coming `h` days, steps `[t, t + h·spd)`, nearest first, for the
//!   temperature and precipitation forecast.
//!
//! The flat order is `[temp(w), precip(w), q_river(w), volume(w),
//! forecast_temp(h), forecast_precip(h)]`.

use serde::{Deserialize, Serialize};

use super::PredictorError;
use crate::rng::SeededRng;
use crate::scenario::{Scenario, SECONDS_PER_DAY};

/// Window lengths in days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub past_days: usize,
    pub forecast_days: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            past_days: 14,
            forecast_days: 3,
        }
    }
}

impl WindowSpec {
    pub fn feature_len(&self) -> usize {
        4 * self.past_days + 2 * self.forecast_days
    }
}

/// Affine maps that make the raw inputs order one; stored with the
/// parameters so serving uses exactly the training transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub temp_offset: f64,
    pub temp_scale: f64,
    pub precip_scale: f64,
    /// Used for river flow features and for the training loss (m³/s).
    pub flow_scale: f64,
    pub volume_scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            temp_offset: 0.0,
            temp_scale: 1.0,
            precip_scale: 1.0,
            flow_scale: 1.0,
            volume_scale: 1.0,
        }
    }
}

fn positive_or_one(x: f64) -> f64 {
    if x.is_finite() && x > 0.0 {
        x
    } else {
        1.0
    }
}

impl Normalization {
    /// Fit on a set of scenarios. `v_max` scales storage.
    pub fn fit(scenarios: &[&Scenario], v_max: f64) -> Self {
        let temps: Vec<f64> = scenarios
            .iter()
            .flat_map(|s| s.forcing.iter().map(|f| f.temperature))
            .collect();
        let precip: Vec<f64> = scenarios
            .iter()
            .flat_map(|s| s.forcing.iter().map(|f| f.precipitation))
            .collect();
        let needs: Vec<f64> = scenarios.iter().flat_map(|s| s.q_need.iter().copied()).collect();
        let mean = |xs: &[f64]| {
            if xs.is_empty() {
                0.0
            } else {
                xs.iter().sum::<f64>() / xs.len() as f64
            }
        };
        let temp_mean = mean(&temps);
        let temp_sd = (temps.iter().map(|t| (t - temp_mean).powi(2)).sum::<f64>() / temps.len().max(1) as f64).sqrt();
        Self {
            temp_offset: temp_mean,
            temp_scale: positive_or_one(temp_sd),
            precip_scale: positive_or_one(mean(&precip)),
            flow_scale: positive_or_one(mean(&needs)),
            volume_scale: positive_or_one(v_max),
        }
    }

    pub fn validate(&self) -> Result<(), PredictorError> {
        for (name, v) in [
            ("temp_scale", self.temp_scale),
            ("precip_scale", self.precip_scale),
            ("flow_scale", self.flow_scale),
            ("volume_scale", self.volume_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(PredictorError::Domain(format!(
                    "normalization {name} must be positive, got {v}"
                )));
            }
        }
        if !self.temp_offset.is_finite() {
            return Err(PredictorError::Domain(
                "normalization temp_offset must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Realised history the predictor may look at: start-of-step storage and
/// river flow, indexed by step.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    pub volume: &'a [f64],
    pub q_river: &'a [f64],
}

/// Normalised inputs for one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub past_temperature: Vec<f64>,
    pub past_precipitation: Vec<f64>,
    pub past_q_river: Vec<f64>,
    pub past_volume: Vec<f64>,
    pub forecast_temperature: Vec<f64>,
    pub forecast_precipitation: Vec<f64>,
}

impl FeatureWindow {
    pub fn len(&self) -> usize {
        self.past_temperature.len()
            + self.past_precipitation.len()
            + self.past_q_river.len()
            + self.past_volume.len()
            + self.forecast_temperature.len()
            + self.forecast_precipitation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.past_temperature);
        v.extend_from_slice(&self.past_precipitation);
        v.extend_from_slice(&self.past_q_river);
        v.extend_from_slice(&self.past_volume);
        v.extend_from_slice(&self.forecast_temperature);
        v.extend_from_slice(&self.forecast_precipitation);
        v
    }

    /// Imperfect forecast: additive Gaussian noise in physical units
    /// (°C and mm/day), precipitation kept nonnegative.
    pub fn perturb_forecast(&mut self, noise: &ForecastNoise, norm: &Normalization, rng: &mut SeededRng) {
        for t in &mut self.forecast_temperature {
            *t += noise.temp_sd * rng.standard_normal() / norm.temp_scale;
        }
        for p in &mut self.forecast_precipitation {
            *p = (*p + noise.precip_sd * rng.standard_normal() / norm.precip_scale).max(0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastNoise {
    pub temp_sd: f64,
    pub precip_sd: f64,
}

impl Default for ForecastNoise {
    fn default() -> Self {
        Self {
            temp_sd: 1.0,
            precip_sd: 0.5,
        }
    }
}

impl ForecastNoise {
    pub fn none() -> Self {
        Self {
            temp_sd: 0.0,
            precip_sd: 0.0,
        }
    }
}

pub fn steps_per_day(dt: f64) -> Result<usize, PredictorError> {
    let spd = SECONDS_PER_DAY / dt;
    let rounded = spd.round();
    if rounded < 1.0 || (spd - rounded).abs() > 1e-9 {
        return Err(PredictorError::Contract(format!(
            "step length {dt} s must divide one day for daily features"
        )));
    }
    Ok(rounded as usize)
}

/// First step at which a window fits, and one past the last.
pub fn valid_range(horizon: usize, window: &WindowSpec, dt: f64) -> Result<std::ops::Range<usize>, PredictorError> {
    let spd = steps_per_day(dt)?;
    let start = window.past_days * spd;
    let end = (horizon + 1).saturating_sub(window.forecast_days * spd);
    Ok(start..end.max(start))
}

fn block_means(values: impl Fn(usize) -> f64, start: usize, blocks: usize, spd: usize) -> Vec<f64> {
    (0..blocks)
        .map(|b| {
            let s = start + b * spd;
            (s..s + spd).map(&values).sum::<f64>() / spd as f64
        })
        .collect()
}

pub fn featurize(
    scenario: &Scenario,
    t: usize,
    history: History<'_>,
    window: &WindowSpec,
    norm: &Normalization,
) -> Result<FeatureWindow, PredictorError> {
    let spd = steps_per_day(scenario.dt())?;
    let past = window.past_days * spd;
    let ahead = window.forecast_days * spd;
    let horizon = scenario.len();
    if t < past || t + ahead > horizon {
        return Err(PredictorError::Contract(format!(
            "step {t} needs {past} past and {ahead} future steps within horizon {horizon}"
        )));
    }
    if history.volume.len() < t || history.q_river.len() < t {
        return Err(PredictorError::Contract(format!(
            "history covers {} / {} steps, need {t}",
            history.volume.len(),
            history.q_river.len()
        )));
    }
    let f = &scenario.forcing;
    let temp = |s: usize| (f[s].temperature - norm.temp_offset) / norm.temp_scale;
    let precip = |s: usize| f[s].precipitation / norm.precip_scale;
    let w = window.past_days;
    let h = window.forecast_days;
    Ok(FeatureWindow {
        past_temperature: block_means(temp, t - past, w, spd),
        past_precipitation: block_means(precip, t - past, w, spd),
        past_q_river: block_means(|s| history.q_river[s] / norm.flow_scale, t - past, w, spd),
        past_volume: block_means(|s| history.volume[s] / norm.volume_scale, t - past, w, spd),
        forecast_temperature: block_means(temp, t, h, spd),
        forecast_precipitation: block_means(precip, t, h, spd),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydro::Forcing;
    use crate::scenario::ScenarioConfig;

    fn constant_scenario(n: usize, dt: f64) -> Scenario {
        let cfg = ScenarioConfig {
            horizon: n,
            ..ScenarioConfig::wet(n, dt, 1)
        };
        Scenario {
            config: cfg,
            forcing: vec![
                Forcing {
                    inflow: 10.0,
                    temperature: 12.0,
                    precipitation: 3.0,
                    demand: 1.0,
                    price: 1.0,
                    solar_cf: 0.0,
                };
                n
            ],
            q_need: vec![5.0; n],
        }
    }

    #[test]
    fn one_day_window_has_six_features() {
        let s = constant_scenario(4, SECONDS_PER_DAY);
        let hist = History {
            volume: &[1.0; 4],
            q_river: &[2.0; 4],
        };
        let win = WindowSpec {
            past_days: 1,
            forecast_days: 1,
        };
        let fw = featurize(&s, 1, hist, &win, &Normalization::default()).unwrap();
        assert_eq!(fw.to_vec(), vec![12.0, 3.0, 2.0, 1.0, 12.0, 3.0]);
        assert_eq!(win.feature_len(), 6);
    }

    #[test]
    fn constant_scenario_gives_constant_features() {
        let s = constant_scenario(24 * 30, 3600.0);
        let hist = History {
            volume: &vec![7.0; 24 * 30],
            q_river: &vec![2.0; 24 * 30],
        };
        let win = WindowSpec::default();
        let norm = Normalization {
            temp_offset: 10.0,
            temp_scale: 2.0,
            precip_scale: 3.0,
            flow_scale: 4.0,
            volume_scale: 7.0,
        };
        let range = valid_range(s.len(), &win, s.dt()).unwrap();
        let first = featurize(&s, range.start, hist, &win, &norm).unwrap();
        for t in range.clone().step_by(17) {
            assert_eq!(featurize(&s, t, hist, &win, &norm).unwrap(), first);
        }
        assert_eq!(first.past_temperature[0], 1.0);
        assert_eq!(first.past_q_river[0], 0.5);
        assert_eq!(first.past_volume[0], 1.0);
    }

    #[test]
    fn out_of_range_steps_are_rejected() {
        let s = constant_scenario(20, SECONDS_PER_DAY);
        let hist = History {
            volume: &[1.0; 20],
            q_river: &[1.0; 20],
        };
        let win = WindowSpec {
            past_days: 5,
            forecast_days: 3,
        };
        let n = Normalization::default();
        assert!(featurize(&s, 4, hist, &win, &n).is_err());
        assert!(featurize(&s, 5, hist, &win, &n).is_ok());
        assert!(featurize(&s, 17, hist, &win, &n).is_ok());
        assert!(featurize(&s, 18, hist, &win, &n).is_err());
        assert_eq!(valid_range(20, &win, SECONDS_PER_DAY).unwrap(), 5..18);
    }

    #[test]
    fn step_length_must_divide_a_day() {
        assert_eq!(steps_per_day(3600.0).unwrap(), 24);
        assert!(steps_per_day(7000.0).is_err());
        assert!(steps_per_day(2.0 * SECONDS_PER_DAY).is_err());
    }
}
