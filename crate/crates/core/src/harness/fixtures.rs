//! Shipped defaults: the reference plant and the wet and drought scenarios
//! used by the CLI's default configuration and by the regression tests.

use crate::hydro::PlantSpec;
use crate::scenario::{make_scenario, Scenario, ScenarioConfig, ScenarioError};

pub const DEFAULT_SEED: u64 = 2024;
/// 90 days of hourly steps.
pub const FIXTURE_HORIZON: usize = 2160;
pub const FIXTURE_DT: f64 = 3600.0;

/// A 0.5 km³ reservoir on a river with a mean annual flow of 100 m³/s.
pub fn default_plant() -> PlantSpec {
    PlantSpec {
        v_min: 5e7,
        v_max: 5e8,
        v_ref_recommended: 3e8,
        head_a: 40.0,
        head_b: 6e-8,
        eta: 0.9,
        q_turb_max: 150.0,
        q_eco_max: 100.0,
        q_irr_max: 20.0,
        q_statutory_floor: 50.0,
        q_eco_cap: 80.0,
        q_eco_safety_floor: 25.0,
        level_gain: 1.0,
        solar_capacity: 20.0,
        k_evap: 2e-10,
        dt: FIXTURE_DT,
    }
}

/// The default plant with a different step length.
pub fn plant_with_dt(dt: f64) -> PlantSpec {
    PlantSpec { dt, ..default_plant() }
}

pub fn wet_config(seed: u64) -> ScenarioConfig {
    ScenarioConfig::wet(FIXTURE_HORIZON, FIXTURE_DT, seed)
}

pub fn drought_config(seed: u64) -> ScenarioConfig {
    ScenarioConfig::drought(FIXTURE_HORIZON, FIXTURE_DT, seed)
}

pub fn wet_scenario() -> Result<Scenario, ScenarioError> {
    make_scenario(&wet_config(DEFAULT_SEED))
}

pub fn drought_scenario() -> Result<Scenario, ScenarioError> {
    make_scenario(&drought_config(DEFAULT_SEED))
}
