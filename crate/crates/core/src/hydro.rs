//! Reservoir and plant physics.
//!
//! The plant is modelled as a diversion scheme: turbined water rejoins the
//! river below the bypassed reach, so only the ecological gate and the
//! spillway feed the reach whose health we track.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Water density (kg/m³).
pub const RHO: f64 = 1000.0;
/// Gravitational acceleration (m/s²).
pub const G: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydroError {
    #[error("{name} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("{name} must be nonnegative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("invalid plant spec: {field}: {reason}")]
    InvalidPlant { field: &'static str, reason: String },
}

fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<(), HydroError> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(HydroError::OutOfRange { name, value, lo, hi })
    }
}

/// Physical and legal description of a single reservoir plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    /// Dead storage (m³).
    pub v_min: f64,
    /// Full storage (m³).
    pub v_max: f64,
    /// Season-invariant recommended basin volume set by the authority (m³).
    pub v_ref_recommended: f64,
    /// Head at zero storage (m).
    pub head_a: f64,
    /// Head gained per m³ stored (m/m³).
    pub head_b: f64,
    /// Turbine efficiency.
    pub eta: f64,
    pub q_turb_max: f64,
    pub q_eco_max: f64,
    pub q_irr_max: f64,
    /// Fixed regulatory minimum ecological discharge (m³/s).
    pub q_statutory_floor: f64,
    /// Upper edge of the adaptive discharge band (m³/s).
    pub q_eco_cap: f64,
    /// Base of the level-dependent lower edge of the adaptive band (m³/s).
    pub q_eco_safety_floor: f64,
    /// Gain applied to the relative shortfall below `v_ref_recommended`
    /// when raising the adaptive lower edge.
    pub level_gain: f64,
    /// Installed solar peak power (MW).
    pub solar_capacity: f64,
    /// Evaporation coefficient (1/(°C·s)).
    pub k_evap: f64,
    /// Timestep length (s).
    pub dt: f64,
}

impl PlantSpec {
    pub fn head(&self, volume: f64) -> f64 {
        self.head_a + self.head_b * volume
    }

    /// Power in MW per m³/s turbined per metre of head.
    pub fn power_coefficient(&self) -> f64 {
        self.eta * RHO * G / 1e6
    }

    /// Upper bound on hydro output over the whole storage range.
    pub fn max_power(&self) -> f64 {
        self.power_coefficient() * self.q_turb_max * self.head(self.v_max).max(self.head(self.v_min))
    }

    pub fn validate(&self) -> Result<(), HydroError> {
        let bad = |field: &'static str, reason: &str| {
            Err(HydroError::InvalidPlant {
                field,
                reason: reason.to_string(),
            })
        };
        let all = [
            ("v_min", self.v_min),
            ("v_max", self.v_max),
            ("v_ref_recommended", self.v_ref_recommended),
            ("head_a", self.head_a),
            ("head_b", self.head_b),
            ("eta", self.eta),
            ("q_turb_max", self.q_turb_max),
            ("q_eco_max", self.q_eco_max),
            ("q_irr_max", self.q_irr_max),
            ("q_statutory_floor", self.q_statutory_floor),
            ("q_eco_cap", self.q_eco_cap),
            ("q_eco_safety_floor", self.q_eco_safety_floor),
            ("level_gain", self.level_gain),
            ("solar_capacity", self.solar_capacity),
            ("k_evap", self.k_evap),
            ("dt", self.dt),
        ];
        for (field, value) in all {
            if !value.is_finite() {
                return bad(field, "must be finite");
            }
        }
        if !(0.0 <= self.v_min && self.v_min < self.v_ref_recommended && self.v_ref_recommended <= self.v_max) {
            return bad("v_ref_recommended", "need 0 <= v_min < v_ref_recommended <= v_max");
        }
        if self.head(self.v_min) <= 0.0 || self.head(self.v_max) <= 0.0 {
            return bad("head_a", "head must be positive over [v_min, v_max]");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta", "need 0 < eta <= 1");
        }
        for (field, value) in [
            ("q_turb_max", self.q_turb_max),
            ("q_irr_max", self.q_irr_max),
            ("solar_capacity", self.solar_capacity),
            ("k_evap", self.k_evap),
            ("level_gain", self.level_gain),
        ] {
            if value < 0.0 {
                return bad(field, "must be nonnegative");
            }
        }
        if !(0.0 < self.q_statutory_floor
            && self.q_statutory_floor <= self.q_eco_cap
            && self.q_eco_cap <= self.q_eco_max)
        {
            return bad(
                "q_statutory_floor",
                "need 0 < q_statutory_floor <= q_eco_cap <= q_eco_max",
            );
        }
        if !(0.0 < self.q_eco_safety_floor && self.q_eco_safety_floor <= self.q_statutory_floor) {
            return bad("q_eco_safety_floor", "need 0 < q_eco_safety_floor <= q_statutory_floor");
        }
        if self.dt <= 0.0 {
            return bad("dt", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservoirState {
    pub volume: f64,
    pub t: usize,
}

/// Releases for one timestep (m³/s).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlVector {
    pub q_turb: f64,
    pub q_eco: f64,
    pub q_irr: f64,
    pub q_spill: f64,
}

impl ControlVector {
    pub fn total(&self) -> f64 {
        self.q_turb + self.q_eco + self.q_irr + self.q_spill
    }

    pub fn validate(&self, plant: &PlantSpec) -> Result<(), HydroError> {
        check_range("q_turb", self.q_turb, 0.0, plant.q_turb_max)?;
        check_range("q_eco", self.q_eco, 0.0, plant.q_eco_max)?;
        check_range("q_irr", self.q_irr, 0.0, plant.q_irr_max)?;
        if !(self.q_spill >= 0.0 && self.q_spill.is_finite()) {
            return Err(HydroError::Negative {
                name: "q_spill",
                value: self.q_spill,
            });
        }
        Ok(())
    }
}

/// Per-timestep external forcing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Forcing {
    /// Natural inflow (m³/s).
    pub inflow: f64,
    /// °C
    pub temperature: f64,
    /// mm/day
    pub precipitation: f64,
    /// MW
    pub demand: f64,
    /// currency/MWh
    pub price: f64,
    pub solar_cf: f64,
}

/// Hydro output in MW for a turbine flow at a given storage.
pub fn power_output(q_turb: f64, volume: f64, plant: &PlantSpec) -> Result<f64, HydroError> {
    check_range("volume", volume, plant.v_min, plant.v_max)?;
    check_range("q_turb", q_turb, 0.0, plant.q_turb_max)?;
    Ok(plant.power_coefficient() * q_turb * plant.head(volume))
}

/// Hydro output over a step, using the head at the mean of the start and
/// end storage.
pub fn step_power(q_turb: f64, v_start: f64, v_end: f64, plant: &PlantSpec) -> Result<f64, HydroError> {
    power_output(q_turb, 0.5 * (v_start + v_end), plant)
}

/// Evaporative loss rate (m³/s); linear in storage and in positive degrees.
pub fn evaporation_loss(volume: f64, temperature: f64, k_evap: f64) -> Result<f64, HydroError> {
    if !(volume >= 0.0) {
        return Err(HydroError::Negative {
            name: "volume",
            value: volume,
        });
    }
    Ok(k_evap * temperature.max(0.0) * volume)
}

/// Outcome of one mass-balance step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: ReservoirState,
    /// Controls after curtailment and forced spill.
    pub realized: ControlVector,
    /// Evaporation actually removed (m³/s).
    pub evaporation: f64,
}

/// Advance the reservoir one step.
///
/// Overflow above `v_max` becomes extra spill. A shortfall below `v_min`
/// curtails releases in the order spill, turbine, irrigation, eco; if all of
/// them are exhausted the evaporation is curtailed too, so storage never
/// leaves `[v_min, v_max]`.
pub fn step_reservoir(
    state: ReservoirState,
    u: ControlVector,
    f: &Forcing,
    plant: &PlantSpec,
) -> Result<StepOutcome, HydroError> {
    check_range("volume", state.volume, plant.v_min, plant.v_max)?;
    u.validate(plant)?;
    if !(f.inflow >= 0.0) {
        return Err(HydroError::Negative {
            name: "inflow",
            value: f.inflow,
        });
    }
    let dt = plant.dt;
    let mut evap = evaporation_loss(state.volume, f.temperature, plant.k_evap)?;
    let mut realized = u;
    let balance = state.volume + dt * (f.inflow - u.total()) - dt * evap;

    let volume = if balance > plant.v_max {
        realized.q_spill += (balance - plant.v_max) / dt;
        plant.v_max
    } else if balance < plant.v_min {
        let mut deficit = (plant.v_min - balance) / dt;
        for q in [
            &mut realized.q_spill,
            &mut realized.q_turb,
            &mut realized.q_irr,
            &mut realized.q_eco,
            &mut evap,
        ] {
            let cut = deficit.min(*q);
            *q -= cut;
            deficit -= cut;
            if deficit <= 0.0 {
                break;
            }
        }
        plant.v_min
    } else {
        balance
    };

    Ok(StepOutcome {
        next: ReservoirState { volume, t: state.t + 1 },
        realized,
        evaporation: evap,
    })
}

/// Flow through the bypassed reach.
pub fn river_flow(u: &ControlVector) -> f64 {
    u.q_eco + u.q_spill
}

/// Fractional deficit of delivered river flow against ecological need.
pub fn stress(q_river: f64, q_need: f64) -> Result<f64, HydroError> {
    if !(q_river >= 0.0) {
        return Err(HydroError::Negative {
            name: "q_river",
            value: q_river,
        });
    }
    if !(q_need >= 0.0) {
        return Err(HydroError::Negative {
            name: "q_need",
            value: q_need,
        });
    }
    if q_need == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 - q_river / q_need).clamp(0.0, 1.0))
}
