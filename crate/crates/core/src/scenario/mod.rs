//! Synthetic hydro-climate scenarios.
//!
//! A scenario bundles climate forcing, natural inflow, demand and price
//! series with a hidden ecological-need series. The need series plays the
//! role of ground truth: it trains the discharge predictor and scores every
//! policy. All of it is a documented surrogate, not a model of any real
//! basin.
//!
//! Time origin: `t = 0` is the middle of spring. The seasonal temperature
//! term `sin(2πt/Y)` peaks at `Y/4`, which is the centre of summer; each
//! season spans a quarter year centred on its phase.

mod io;

pub use io::{read_scenario, write_scenario, SCENARIO_COLUMNS, SCENARIO_FORMAT_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydro::Forcing;
use crate::rng::SeededRng;

pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const DAYS_PER_YEAR: f64 = 365.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("scenario series length mismatch: {0}")]
    Shape(String),
    #[error("scenario file {path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(field: &'static str, reason: &str) -> ScenarioError {
    ScenarioError::InvalidConfig {
        field,
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Autumn,
}

/// Constants of the percent-of-mean-flow ecological need surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EcoNeedModel {
    pub base_winter: f64,
    pub base_spring: f64,
    pub base_summer: f64,
    pub base_autumn: f64,
    /// Relative need increase per °C above `t_ref` (1/°C).
    pub k_temp: f64,
    pub t_ref: f64,
    /// Relative need increase at full dryness.
    pub k_dry: f64,
    /// Trailing window for the precipitation deficit (days).
    pub dryness_window_days: f64,
}

impl Default for EcoNeedModel {
    fn default() -> Self {
        Self {
            base_winter: 0.2,
            base_spring: 0.4,
            base_summer: 0.3,
            base_autumn: 0.25,
            k_temp: 0.02,
            t_ref: 18.0,
            k_dry: 0.5,
            dryness_window_days: 14.0,
        }
    }
}

impl EcoNeedModel {
    pub fn base_fraction(&self, season: Season) -> f64 {
        match season {
            Season::Winter => self.base_winter,
            Season::Spring => self.base_spring,
            Season::Summer => self.base_summer,
            Season::Autumn => self.base_autumn,
        }
    }

    fn min_base(&self) -> f64 {
        self.base_winter
            .min(self.base_spring)
            .min(self.base_summer)
            .min(self.base_autumn)
    }

    /// Need for a single step given its modifiers.
    pub fn need(&self, maf: f64, season: Season, temperature: f64, dryness: f64) -> f64 {
        maf * self.base_fraction(season)
            * (1.0 + self.k_temp * (temperature - self.t_ref).max(0.0))
            * (1.0 + self.k_dry * dryness)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of timesteps.
    pub horizon: usize,
    pub seed: u64,
    /// Timestep length (s).
    pub dt: f64,
    pub mean_temp: f64,
    pub season_amplitude_temp: f64,
    /// Stationary standard deviation of the temperature noise (°C).
    pub temp_noise_sd: f64,
    /// mm/day
    pub precip_mean: f64,
    /// Stationary standard deviation of the precipitation noise before
    /// rectification (mm/day).
    pub precip_noise_sd: f64,
    pub ar1_rho: f64,
    pub drought_factor: f64,
    /// Mean annual natural flow (m³/s).
    pub maf: f64,
    /// Runoff recession constant (1/s).
    pub catchment_k: f64,
    /// MW
    pub demand_base: f64,
    /// currency/MWh
    pub price_base: f64,
    #[serde(default)]
    pub eco: EcoNeedModel,
}

impl ScenarioConfig {
    /// Temperate, well-watered conditions.
    pub fn wet(horizon: usize, dt: f64, seed: u64) -> Self {
        Self {
            horizon,
            seed,
            dt,
            mean_temp: 9.0,
            season_amplitude_temp: 6.0,
            temp_noise_sd: 1.5,
            precip_mean: 4.0,
            precip_noise_sd: 1.5,
            ar1_rho: 0.9,
            drought_factor: 1.0,
            maf: 100.0,
            catchment_k: 2.0e-6,
            demand_base: 30.0,
            price_base: 60.0,
            eco: EcoNeedModel::default(),
        }
    }

    /// Hot, dry conditions: precipitation scaled to 30% and 5 °C warmer.
    pub fn drought(horizon: usize, dt: f64, seed: u64) -> Self {
        let wet = Self::wet(horizon, dt, seed);
        Self {
            mean_temp: wet.mean_temp + 5.0,
            drought_factor: 0.3,
            ..wet
        }
    }

    pub fn steps_per_year(&self) -> f64 {
        DAYS_PER_YEAR * SECONDS_PER_DAY / self.dt
    }

    pub fn season(&self, t: usize) -> Season {
        let year = self.steps_per_year();
        let phase = (t as f64 % year) / year;
        if phase < 0.125 {
            Season::Spring
        } else if phase < 0.375 {
            Season::Summer
        } else if phase < 0.625 {
            Season::Autumn
        } else if phase < 0.875 {
            Season::Winter
        } else {
            Season::Spring
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.horizon < 1 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        for (field, v) in [
            ("dt", self.dt),
            ("mean_temp", self.mean_temp),
            ("season_amplitude_temp", self.season_amplitude_temp),
            ("temp_noise_sd", self.temp_noise_sd),
            ("precip_mean", self.precip_mean),
            ("precip_noise_sd", self.precip_noise_sd),
            ("ar1_rho", self.ar1_rho),
            ("drought_factor", self.drought_factor),
            ("maf", self.maf),
            ("catchment_k", self.catchment_k),
            ("demand_base", self.demand_base),
            ("price_base", self.price_base),
        ] {
            if !v.is_finite() {
                return Err(invalid(field, "must be finite"));
            }
        }
        if self.dt <= 0.0 {
            return Err(invalid("dt", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.ar1_rho) {
            return Err(invalid("ar1_rho", "need 0 <= ar1_rho < 1"));
        }
        if !(self.drought_factor > 0.0 && self.drought_factor <= 1.0) {
            return Err(invalid("drought_factor", "need 0 < drought_factor <= 1"));
        }
        if self.maf <= 0.0 {
            return Err(invalid("maf", "must be positive"));
        }
        for (field, v) in [
            ("temp_noise_sd", self.temp_noise_sd),
            ("precip_mean", self.precip_mean),
            ("precip_noise_sd", self.precip_noise_sd),
            ("demand_base", self.demand_base),
            ("price_base", self.price_base),
        ] {
            if v < 0.0 {
                return Err(invalid(field, "must be nonnegative"));
            }
        }
        if self.catchment_k <= 0.0 {
            return Err(invalid("catchment_k", "must be positive"));
        }
        if self.catchment_k * self.dt >= 1.0 {
            return Err(invalid(
                "catchment_k",
                "catchment_k * dt must be < 1 for a stable recession",
            ));
        }
        let eco = &self.eco;
        if eco.min_base() <= 0.0 {
            return Err(invalid("eco", "base fractions must be positive"));
        }
        if eco.k_temp < 0.0 || eco.k_dry < 0.0 || eco.dryness_window_days <= 0.0 {
            return Err(invalid("eco", "k_temp, k_dry must be >= 0 and the window positive"));
        }
        Ok(())
    }
}

/// Climate series produced by [`generate_climate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Climate {
    pub temperature: Vec<f64>,
    pub precipitation: Vec<f64>,
    pub solar_cf: Vec<f64>,
}

const STREAM_TEMP: u64 = 1;
const STREAM_PRECIP: u64 = 2;
const STREAM_PRICE: u64 = 3;

/// Stationary unit-variance AR(1) sequence.
fn ar1_series(rng: &mut SeededRng, rho: f64, n: usize) -> Vec<f64> {
    let innovation = libm::sqrt(1.0 - rho * rho);
    let mut out = Vec::with_capacity(n);
    let mut e = rng.standard_normal();
    for _ in 0..n {
        out.push(e);
        e = rho * e + innovation * rng.standard_normal();
    }
    out
}

/// Hour of day at the midpoint of step `t`.
fn hour_of_day(t: usize, dt: f64) -> f64 {
    let secs = (t as f64 + 0.5) * dt;
    (secs % SECONDS_PER_DAY) / 3600.0
}

fn seasonal_cycle(cfg: &ScenarioConfig, t: usize) -> f64 {
    libm::sin(2.0 * std::f64::consts::PI * t as f64 / cfg.steps_per_year())
}

/// Clear-sky diurnal shape; the daily mean when steps are a day or longer.
fn diurnal_solar(t: usize, dt: f64) -> f64 {
    if dt >= SECONDS_PER_DAY {
        return 1.0 / std::f64::consts::PI;
    }
    let h = hour_of_day(t, dt);
    libm::sin(std::f64::consts::PI * (h - 6.0) / 12.0).max(0.0)
}

/// Shape in [-1, 1] peaking at `peak_hour`; zero for daily steps.
fn diurnal_wave(t: usize, dt: f64, peak_hour: f64) -> f64 {
    if dt >= SECONDS_PER_DAY {
        return 0.0;
    }
    let h = hour_of_day(t, dt);
    libm::cos(2.0 * std::f64::consts::PI * (h - peak_hour) / 24.0)
}

pub fn generate_climate(cfg: &ScenarioConfig) -> Result<Climate, ScenarioError> {
    cfg.validate()?;
    let n = cfg.horizon;
    let mut temp_rng = SeededRng::substream(cfg.seed, STREAM_TEMP);
    let mut precip_rng = SeededRng::substream(cfg.seed, STREAM_PRECIP);
    let temp_noise = ar1_series(&mut temp_rng, cfg.ar1_rho, n);
    let precip_noise = ar1_series(&mut precip_rng, cfg.ar1_rho, n);

    let mut climate = Climate {
        temperature: Vec::with_capacity(n),
        precipitation: Vec::with_capacity(n),
        solar_cf: Vec::with_capacity(n),
    };
    for t in 0..n {
        let season = seasonal_cycle(cfg, t);
        climate
            .temperature
            .push(cfg.mean_temp + cfg.season_amplitude_temp * season + cfg.temp_noise_sd * temp_noise[t]);
        let p = (cfg.precip_mean + cfg.precip_noise_sd * precip_noise[t]).max(0.0);
        climate.precipitation.push(cfg.drought_factor * p);
        let seasonal_solar = 0.65 + 0.35 * season;
        climate
            .solar_cf
            .push((seasonal_solar * diurnal_solar(t, cfg.dt)).clamp(0.0, 1.0));
    }
    Ok(climate)
}

/// Linear-reservoir runoff from precipitation.
///
/// The catchment store starts at the steady state of the series' mean
/// precipitation, and the runoff coefficient is fitted so that the mean
/// inflow equals `maf` for the undroughted precipitation; a droughted series
/// therefore averages `drought_factor * maf`.
pub fn inflow_from_climate(precipitation: &[f64], cfg: &ScenarioConfig) -> Result<Vec<f64>, ScenarioError> {
    if cfg.catchment_k * cfg.dt >= 1.0 {
        return Err(invalid(
            "catchment_k",
            "catchment_k * dt must be < 1 for a stable recession",
        ));
    }
    if cfg.catchment_k <= 0.0 {
        return Err(invalid("catchment_k", "must be positive"));
    }
    if !(cfg.drought_factor > 0.0 && cfg.drought_factor <= 1.0) {
        return Err(invalid("drought_factor", "need 0 < drought_factor <= 1"));
    }
    if precipitation.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(p) = precipitation.iter().find(|p| !(**p >= 0.0)) {
        return Err(ScenarioError::Shape(format!("negative precipitation {p}")));
    }
    let k = cfg.catchment_k;
    let retain = 1.0 - k * cfg.dt;
    let undroughted: Vec<f64> = precipitation.iter().map(|p| p / cfg.drought_factor).collect();
    let mean_p = undroughted.iter().sum::<f64>() / undroughted.len() as f64;

    // unit-coefficient runoff
    let mut store = mean_p / (k * cfg.dt);
    let mut unit = Vec::with_capacity(undroughted.len());
    for p in &undroughted {
        unit.push(k * store);
        store = store * retain + p;
    }
    let mean_unit = unit.iter().sum::<f64>() / unit.len() as f64;
    if mean_unit <= 0.0 {
        return Ok(vec![0.0; unit.len()]);
    }
    let alpha = cfg.maf / mean_unit;
    Ok(unit.iter().map(|g| alpha * cfg.drought_factor * g).collect())
}

/// Trailing-window precipitation deficit relative to climatology, in [0, 1].
pub fn dryness_series(precipitation: &[f64], cfg: &ScenarioConfig) -> Vec<f64> {
    let window = ((cfg.eco.dryness_window_days * SECONDS_PER_DAY / cfg.dt).round() as usize).max(1);
    let mut out = Vec::with_capacity(precipitation.len());
    for t in 0..precipitation.len() {
        let start = (t + 1).saturating_sub(window);
        let slice = &precipitation[start..=t];
        let mean = slice.iter().sum::<f64>() / slice.len() as f64;
        let d = if cfg.precip_mean > 0.0 {
            (1.0 - mean / cfg.precip_mean).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(d);
    }
    out
}

pub fn eco_need(temperature: &[f64], precipitation: &[f64], cfg: &ScenarioConfig) -> Result<Vec<f64>, ScenarioError> {
    if temperature.len() != precipitation.len() {
        return Err(ScenarioError::Shape(format!(
            "temperature has {} steps, precipitation {}",
            temperature.len(),
            precipitation.len()
        )));
    }
    let dryness = dryness_series(precipitation, cfg);
    Ok(temperature
        .iter()
        .zip(&dryness)
        .enumerate()
        .map(|(t, (temp, dry))| cfg.eco.need(cfg.maf, cfg.season(t), *temp, *dry))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub forcing: Vec<Forcing>,
    /// Hidden ecological need (m³/s).
    pub q_need: Vec<f64>,
}

impl Scenario {
    pub fn len(&self) -> usize {
        self.forcing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forcing.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn mean_price(&self) -> f64 {
        if self.forcing.is_empty() {
            return 0.0;
        }
        self.forcing.iter().map(|f| f.price).sum::<f64>() / self.forcing.len() as f64
    }

    pub fn temperature(&self) -> Vec<f64> {
        self.forcing.iter().map(|f| f.temperature).collect()
    }

    pub fn precipitation(&self) -> Vec<f64> {
        self.forcing.iter().map(|f| f.precipitation).collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.forcing.len() != self.q_need.len() || self.forcing.len() != self.config.horizon {
            return Err(ScenarioError::Shape(format!(
                "horizon {} but {} forcing rows and {} need values",
                self.config.horizon,
                self.forcing.len(),
                self.q_need.len()
            )));
        }
        Ok(())
    }
}

pub fn make_scenario(cfg: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    let climate = generate_climate(cfg)?;
    let inflow = inflow_from_climate(&climate.precipitation, cfg)?;
    let q_need = eco_need(&climate.temperature, &climate.precipitation, cfg)?;

    let mut price_rng = SeededRng::substream(cfg.seed, STREAM_PRICE);
    let price_noise = ar1_series(&mut price_rng, cfg.ar1_rho, cfg.horizon);

    let forcing = (0..cfg.horizon)
        .map(|t| {
            let demand = cfg.demand_base * (1.0 + 0.15 * diurnal_wave(t, cfg.dt, 13.0));
            let price_factor = 1.0 + 0.3 * diurnal_wave(t, cfg.dt, 18.0) + 0.05 * price_noise[t];
            Forcing {
                inflow: inflow[t],
                temperature: climate.temperature[t],
                precipitation: climate.precipitation[t],
                demand,
                price: cfg.price_base * price_factor.max(0.1),
                solar_cf: climate.solar_cf[t],
            }
        })
        .collect();

    Ok(Scenario {
        config: cfg.clone(),
        forcing,
        q_need,
    })
}
