//! Revenue-maximising release scheduling.
//!
//! Storage is eliminated by forward simulation, so the decision vector holds
//! only the four releases per timestep. Box limits, the irrigation minimum and
//! the river floor `q_eco + q_spill >= qmin_river` are enforced by an exact
//! projection; storage limits, hard demand and the optional storage-dependent
//! floor guard are handled by an augmented Lagrangian.

mod band;
mod brute;
mod check;
mod io;
mod model;
mod projection;
mod solve;

pub use brute::{brute_force_solve, grid_combinations, BRUTE_FORCE_CAP};
pub use check::{check_solution, SlackReport};
pub use io::{diagnostics_to_json, schedule_csv, write_diagnostics, write_schedule, SCHEDULE_COLUMNS};
pub use solve::{solve, SolverConfig};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydro::{ControlVector, HydroError, PlantSpec};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DemandMode {
    Hard,
    /// Unmet demand costs `penalty` per MWh.
    Soft {
        penalty: f64,
    },
}

/// Settings of [`build_problem`] beyond the floors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemOptions {
    /// `None` selects soft demand with a penalty of 5× the mean price.
    pub demand_mode: Option<DemandMode>,
    pub include_solar: bool,
    /// Storage at the start of the horizon (m³).
    pub initial_volume: f64,
    /// Also require `q_eco + q_spill >= level_lower_bound(V_t)` at the
    /// simulated start-of-step storage.
    pub level_guard: bool,
}

impl ProblemOptions {
    pub fn new(initial_volume: f64) -> Self {
        Self {
            demand_mode: None,
            include_solar: false,
            initial_volume,
            level_guard: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub scenario: Scenario,
    pub plant: PlantSpec,
    pub qmin_river: Vec<f64>,
    pub qmin_irr: f64,
    pub demand_mode: DemandMode,
    pub include_solar: bool,
    pub initial_volume: f64,
    pub level_guard: bool,
    /// Upper bound used for the spill variable (m³/s).
    pub spill_cap: f64,
}

impl Problem {
    pub fn horizon(&self) -> usize {
        self.qmin_river.len()
    }

    /// Number of decision variables, four per timestep.
    pub fn n_theta(&self) -> usize {
        4 * self.horizon()
    }

    pub fn solar(&self, t: usize) -> f64 {
        if self.include_solar {
            self.plant.solar_capacity * self.scenario.forcing[t].solar_cf
        } else {
            0.0
        }
    }

    /// Upper limits of (q_turb, q_eco, q_irr, q_spill).
    pub fn caps(&self) -> [f64; 4] {
        [
            self.plant.q_turb_max,
            self.plant.q_eco_max,
            self.plant.q_irr_max,
            self.spill_cap,
        ]
    }
}

pub fn build_problem(
    scenario: &Scenario,
    plant: &PlantSpec,
    qmin_river: &[f64],
    qmin_irr: f64,
    options: ProblemOptions,
) -> Result<Problem, OptimizerError> {
    let contract = |m: String| Err(OptimizerError::Contract(m));
    plant.validate()?;
    let horizon = scenario.len();
    if horizon == 0 {
        return contract("scenario is empty".into());
    }
    if qmin_river.len() != horizon {
        return contract(format!(
            "qmin_river has {} values, scenario has {horizon} steps",
            qmin_river.len()
        ));
    }
    if (scenario.dt() - plant.dt).abs() > 1e-9 * plant.dt {
        return contract(format!(
            "scenario dt {} differs from plant dt {}",
            scenario.dt(),
            plant.dt
        ));
    }
    if let Some(t) = qmin_river.iter().position(|q| !(q.is_finite() && *q >= 0.0)) {
        return contract(format!(
            "qmin_river[{t}] = {} must be finite and nonnegative",
            qmin_river[t]
        ));
    }
    if !(qmin_irr.is_finite() && qmin_irr >= 0.0) {
        return contract(format!("qmin_irr = {qmin_irr} must be nonnegative"));
    }
    if qmin_irr > plant.q_irr_max {
        return contract(format!("qmin_irr = {qmin_irr} exceeds q_irr_max = {}", plant.q_irr_max));
    }
    let v0 = options.initial_volume;
    if !(v0 >= plant.v_min && v0 <= plant.v_max) {
        return contract(format!(
            "initial volume {v0} outside [{}, {}]",
            plant.v_min, plant.v_max
        ));
    }
    let demand_mode = options.demand_mode.unwrap_or(DemandMode::Soft {
        penalty: 5.0 * scenario.mean_price(),
    });
    if let DemandMode::Soft { penalty } = demand_mode {
        if !(penalty.is_finite() && penalty >= 0.0) {
            return contract(format!("demand penalty {penalty} must be nonnegative"));
        }
    }
    // Large enough to pass any inflow straight through and to meet any floor.
    let spill_cap = scenario
        .forcing
        .iter()
        .map(|f| f.inflow)
        .chain(qmin_river.iter().copied())
        .chain([plant.q_eco_cap, 1.0])
        .fold(0.0f64, f64::max);
    Ok(Problem {
        scenario: scenario.clone(),
        plant: plant.clone(),
        qmin_river: qmin_river.to_vec(),
        qmin_irr,
        demand_mode,
        include_solar: options.include_solar,
        initial_volume: v0,
        level_guard: options.level_guard,
        spill_cap,
    })
}

/// Release plan with the trajectory it implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSchedule {
    pub controls: Vec<ControlVector>,
    /// Storage at the start of every step plus the final storage (T + 1).
    pub volumes: Vec<f64>,
    /// Hydro output per step (MW).
    pub power: Vec<f64>,
    pub qmin_river: Vec<f64>,
}

impl DecisionSchedule {
    /// Flat `[q_turb, q_eco, q_irr, q_spill]` per step.
    pub fn theta(&self) -> Vec<f64> {
        self.controls
            .iter()
            .flat_map(|u| [u.q_turb, u.q_eco, u.q_irr, u.q_spill])
            .collect()
    }

    pub fn q_river(&self) -> Vec<f64> {
        self.controls.iter().map(|u| u.q_eco + u.q_spill).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Revenue minus the soft-demand penalty (currency).
    pub objective: f64,
    pub revenue: f64,
    pub shortfall_penalty: f64,
    /// Largest violation over all families, see [`SlackReport::violations`].
    pub max_violation: f64,
    pub violation_by_family: BTreeMap<String, f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
    /// Infinity norm of the projected Lagrangian gradient in scaled units.
    pub stationarity: f64,
    pub restarts: usize,
    pub best_restart: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    /// Which budget can't be met: `"water"` or `"demand"`.
    pub budget: String,
    pub first_violating_t: usize,
    pub required: f64,
    pub available: f64,
    pub detail: String,
}

impl std::fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} budget infeasible at t = {}: required {:.6}, available {:.6} ({})",
            self.budget, self.first_violating_t, self.required, self.available, self.detail
        )
    }
}

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("infeasible problem: {0}")]
    Infeasible(InfeasibilityReport),
    #[error("{required} grid combinations exceed the cap of {cap}")]
    GridTooLarge { required: f64, cap: f64 },
    #[error(transparent)]
    Hydro(#[from] HydroError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::hydro::Forcing;
    use crate::rng::SeededRng;
    use crate::scenario::ScenarioConfig;

    /// Storage 1e4..1e5 m³ with hourly steps, so a few steps can drain or
    /// fill a noticeable part of it.
    pub fn small_plant() -> PlantSpec {
        PlantSpec {
            v_min: 1e4,
            v_max: 1e5,
            v_ref_recommended: 6e4,
            head_a: 10.0,
            head_b: 1e-4,
            eta: 0.9,
            q_turb_max: 5.0,
            q_eco_max: 5.0,
            q_irr_max: 0.0,
            q_statutory_floor: 1.0,
            q_eco_cap: 4.0,
            q_eco_safety_floor: 0.5,
            level_gain: 1.0,
            solar_capacity: 0.0,
            k_evap: 0.0,
            dt: 3600.0,
        }
    }

    fn scenario_with(forcing: Vec<Forcing>) -> Scenario {
        let n = forcing.len();
        Scenario {
            config: ScenarioConfig::wet(n, 3600.0, 0),
            q_need: vec![1.0; n],
            forcing,
        }
    }

    /// Inflows cycle through 3, 2, 4 m³/s; price 50, 80, 60; demand 0.2 MW.
    pub fn small_problem(horizon: usize, qmin: f64) -> Problem {
        let forcing = (0..horizon)
            .map(|t| Forcing {
                inflow: [3.0, 2.0, 4.0][t % 3],
                temperature: 10.0,
                precipitation: 1.0,
                demand: 0.2,
                price: [50.0, 80.0, 60.0][t % 3],
                solar_cf: 0.5,
            })
            .collect();
        let mut opts = ProblemOptions::new(5e4);
        opts.demand_mode = Some(DemandMode::Hard);
        build_problem(&scenario_with(forcing), &small_plant(), &vec![qmin; horizon], 0.0, opts).unwrap()
    }

    pub fn random_problem(seed: u64, horizon: usize) -> Problem {
        let mut rng = SeededRng::new(seed);
        let mut plant = small_plant();
        plant.k_evap = rng.uniform_range(0.0, 1e-7);
        plant.q_irr_max = 1.0;
        plant.solar_capacity = 0.3;
        let forcing = (0..horizon)
            .map(|_| Forcing {
                inflow: rng.uniform_range(0.5, 6.0),
                temperature: rng.uniform_range(-5.0, 25.0),
                precipitation: 1.0,
                demand: rng.uniform_range(0.0, 0.6),
                price: rng.uniform_range(20.0, 100.0),
                solar_cf: rng.uniform(),
            })
            .collect();
        let qmin: Vec<f64> = (0..horizon).map(|_| rng.uniform_range(0.0, 3.0)).collect();
        let mut opts = ProblemOptions::new(rng.uniform_range(2e4, 9e4));
        opts.include_solar = true;
        build_problem(&scenario_with(forcing), &plant, &qmin, 0.2, opts).unwrap()
    }
}
