//! Policy evaluation.
//!
//! Every episode is a single perfect-foresight solve over the horizon. The
//! discharge floor comes from the policy; adaptive and clairvoyant floors
//! are computed along a *bootstrap trajectory*, the run-of-river operation
//! under the statutory floor, because the real trajectory is only known
//! after the solve. The solve then also enforces the storage-dependent lower
//! edge at the realised storage.

pub mod fixtures;
mod report;

pub use report::{
    compare, episode_csv, Aggregate, CellOutcome, ComparisonReport, EpisodeSummary, MetricStats, REPORT_FORMAT_VERSION,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydro::{
    river_flow, step_power, step_reservoir, stress, ControlVector, HydroError, PlantSpec, ReservoirState,
};
use crate::optimizer::{
    build_problem, solve, DecisionSchedule, DemandMode, OptimizerError, ProblemOptions, SolveDiagnostics, SolverConfig,
};
use crate::predictor::{
    bounds_from_level, featurize, level_lower_bound, valid_range, EcoPredictorParams, ForecastNoise, History,
    PredictorError, Sample,
};
use crate::rng::SeededRng;
use crate::scenario::Scenario;

/// Stress above this fraction counts as an event.
pub const STRESS_EVENT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Policy {
    /// Constant floor, the statutory regime.
    Fixed { q_const: f64 },
    /// Predictor output; forecast noise is drawn from `seed`.
    Adaptive {
        params: Box<EcoPredictorParams>,
        noise: ForecastNoise,
        seed: u64,
    },
    /// The hidden need itself, clipped to the admissible band.
    Oracle,
}

impl Policy {
    pub fn kind(&self) -> &'static str {
        match self {
            Policy::Fixed { .. } => "fixed",
            Policy::Adaptive { .. } => "adaptive",
            Policy::Oracle => "oracle",
        }
    }

    /// Fixed floors are regulatory and not tied to storage.
    pub fn uses_level_guard(&self) -> bool {
        !matches!(self, Policy::Fixed { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub solver: SolverConfig,
    pub qmin_irr: f64,
    /// `None` selects soft demand at 5× the mean price.
    pub demand_mode: Option<DemandMode>,
    pub include_solar: bool,
    /// Initial storage as a fraction of `v_max`.
    pub initial_fill: f64,
    /// Currency per m³ of floor deficit; `None` = 50× the mean price.
    pub fine_rate: Option<f64>,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            qmin_irr: 0.0,
            demand_mode: None,
            include_solar: false,
            initial_fill: 0.9,
            fine_rate: None,
        }
    }
}

impl EpisodeConfig {
    pub fn initial_volume(&self, plant: &PlantSpec) -> f64 {
        (self.initial_fill * plant.v_max).clamp(plant.v_min, plant.v_max)
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{policy} policy: {source}")]
    Solver {
        policy: &'static str,
        #[source]
        source: OptimizerError,
    },
    #[error("{policy} policy: {source}")]
    Predictor {
        policy: &'static str,
        #[source]
        source: PredictorError,
    },
    #[error(transparent)]
    Hydro(#[from] HydroError),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub policy: String,
    pub energy_mwh: f64,
    pub revenue: f64,
    pub solar_energy_mwh: f64,
    pub demand_shortfall_mwh: f64,
    pub stress: Vec<f64>,
    pub stress_events: usize,
    pub mean_stress: f64,
    pub fines: f64,
    pub water_spilled_m3: f64,
    /// Floor the schedule is held to: the policy floor, raised to the lower
    /// band edge at the realised storage when the policy uses it.
    pub qmin_used: Vec<f64>,
    pub q_need: Vec<f64>,
    pub q_river: Vec<f64>,
    /// Realised start-of-step storage plus the final value.
    pub volumes: Vec<f64>,
    pub power: Vec<f64>,
    pub controls: Vec<ControlVector>,
    pub diagnostics: SolveDiagnostics,
}

/// Run-of-river operation under the statutory floor.
#[derive(Debug, Clone, PartialEq)]
pub struct Bootstrap {
    pub volumes: Vec<f64>,
    pub q_river: Vec<f64>,
}

pub fn bootstrap_trajectory(
    scenario: &Scenario,
    plant: &PlantSpec,
    qmin_irr: f64,
    initial_volume: f64,
) -> Result<Bootstrap, HydroError> {
    let floor = plant.q_statutory_floor.min(plant.q_eco_max);
    let mut state = ReservoirState {
        volume: initial_volume,
        t: 0,
    };
    let mut volumes = vec![initial_volume];
    let mut q_river = Vec::with_capacity(scenario.len());
    for f in &scenario.forcing {
        let u = ControlVector {
            q_turb: (f.inflow - floor - qmin_irr).clamp(0.0, plant.q_turb_max),
            q_eco: floor,
            q_irr: qmin_irr.min(plant.q_irr_max),
            q_spill: 0.0,
        };
        let out = step_reservoir(state, u, f, plant)?;
        q_river.push(river_flow(&out.realized));
        state = out.next;
        volumes.push(state.volume);
    }
    Ok(Bootstrap { volumes, q_river })
}

/// Supervised examples along the bootstrap trajectory of `scenario`.
pub fn training_samples(
    scenario: &Scenario,
    plant: &PlantSpec,
    params: &EcoPredictorParams,
    cfg: &EpisodeConfig,
    noise: &ForecastNoise,
    seed: u64,
) -> Result<Vec<Sample>, HarnessError> {
    let wrap = |source| HarnessError::Predictor {
        policy: "adaptive",
        source,
    };
    let boot = bootstrap_trajectory(scenario, plant, cfg.qmin_irr, cfg.initial_volume(plant))?;
    let history = History {
        volume: &boot.volumes,
        q_river: &boot.q_river,
    };
    let mut rng = SeededRng::new(seed);
    let mut out = Vec::new();
    for t in valid_range(scenario.len(), &params.window, scenario.dt()).map_err(wrap)? {
        let mut x = featurize(scenario, t, history, &params.window, &params.normalization).map_err(wrap)?;
        x.perturb_forecast(noise, &params.normalization, &mut rng);
        out.push(Sample {
            features: x.to_vec(),
            bounds: bounds_from_level(boot.volumes[t], plant).map_err(wrap)?,
            need: scenario.q_need[t],
        });
    }
    Ok(out)
}

/// Floor series a policy publishes for `scenario`.
pub fn policy_floor(
    policy: &Policy,
    scenario: &Scenario,
    plant: &PlantSpec,
    boot: &Bootstrap,
) -> Result<Vec<f64>, HarnessError> {
    let wrap = |source| HarnessError::Predictor {
        policy: policy.kind(),
        source,
    };
    let n = scenario.len();
    match policy {
        Policy::Fixed { q_const } => {
            if !(q_const.is_finite() && *q_const >= 0.0) {
                return Err(HarnessError::Contract(format!(
                    "fixed floor {q_const} must be nonnegative"
                )));
            }
            Ok(vec![*q_const; n])
        }
        Policy::Oracle => (0..n)
            .map(|t| {
                Ok(bounds_from_level(boot.volumes[t], plant)
                    .map_err(wrap)?
                    .clamp(scenario.q_need[t]))
            })
            .collect(),
        Policy::Adaptive { params, noise, seed } => {
            params.validate().map_err(wrap)?;
            let range = valid_range(n, &params.window, scenario.dt()).map_err(wrap)?;
            let history = History {
                volume: &boot.volumes,
                q_river: &boot.q_river,
            };
            let mut rng = SeededRng::new(*seed);
            let mut floor = Vec::with_capacity(n);
            for t in 0..n {
                let b = bounds_from_level(boot.volumes[t], plant).map_err(wrap)?;
                if range.contains(&t) {
                    let mut x = featurize(scenario, t, history, &params.window, &params.normalization).map_err(wrap)?;
                    x.perturb_forecast(noise, &params.normalization, &mut rng);
                    floor.push(params.predict(&x.to_vec(), b).map_err(wrap)?);
                } else {
                    // not enough history or forecast for a window
                    floor.push(b.clamp(plant.q_statutory_floor));
                }
            }
            Ok(floor)
        }
    }
}

pub fn run_policy(
    scenario: &Scenario,
    plant: &PlantSpec,
    policy: &Policy,
    cfg: &EpisodeConfig,
) -> Result<EpisodeResult, HarnessError> {
    let solver_err = |source| HarnessError::Solver {
        policy: policy.kind(),
        source,
    };
    let v0 = cfg.initial_volume(plant);
    let boot = bootstrap_trajectory(scenario, plant, cfg.qmin_irr, v0)?;
    let floor = policy_floor(policy, scenario, plant, &boot)?;
    let options = ProblemOptions {
        demand_mode: cfg.demand_mode,
        include_solar: cfg.include_solar,
        initial_volume: v0,
        level_guard: policy.uses_level_guard(),
    };
    let problem = build_problem(scenario, plant, &floor, cfg.qmin_irr, options).map_err(solver_err)?;
    let (schedule, diagnostics) = solve(&problem, &cfg.solver).map_err(solver_err)?;
    evaluate_schedule(scenario, plant, policy, cfg, &schedule, diagnostics)
}

/// Simulate a schedule with the clipping plant model and score it.
pub fn evaluate_schedule(
    scenario: &Scenario,
    plant: &PlantSpec,
    policy: &Policy,
    cfg: &EpisodeConfig,
    schedule: &DecisionSchedule,
    diagnostics: SolveDiagnostics,
) -> Result<EpisodeResult, HarnessError> {
    let n = scenario.len();
    if schedule.controls.len() != n || schedule.qmin_river.len() != n {
        return Err(HarnessError::Contract(format!(
            "schedule covers {} steps, scenario has {n}",
            schedule.controls.len()
        )));
    }
    let dt = plant.dt;
    let dt_h = dt / 3600.0;
    let fine_rate = cfg.fine_rate.unwrap_or(50.0 * scenario.mean_price());
    let mut state = ReservoirState {
        volume: cfg.initial_volume(plant),
        t: 0,
    };
    let mut r = EpisodeResult {
        policy: policy.kind().to_string(),
        energy_mwh: 0.0,
        revenue: 0.0,
        solar_energy_mwh: 0.0,
        demand_shortfall_mwh: 0.0,
        stress: Vec::with_capacity(n),
        stress_events: 0,
        mean_stress: 0.0,
        fines: 0.0,
        water_spilled_m3: 0.0,
        qmin_used: Vec::with_capacity(n),
        q_need: scenario.q_need.clone(),
        q_river: Vec::with_capacity(n),
        volumes: vec![state.volume],
        power: Vec::with_capacity(n),
        controls: Vec::with_capacity(n),
        diagnostics,
    };
    for t in 0..n {
        let f = &scenario.forcing[t];
        let out = step_reservoir(state, schedule.controls[t], f, plant)?;
        let u = out.realized;
        let power = step_power(u.q_turb, state.volume, out.next.volume, plant)?;
        let solar = if cfg.include_solar {
            plant.solar_capacity * f.solar_cf
        } else {
            0.0
        };
        let q_river = river_flow(&u);
        let mut qmin = schedule.qmin_river[t];
        if policy.uses_level_guard() {
            qmin = qmin.max(level_lower_bound(state.volume, plant));
        }
        let s = stress(q_river, scenario.q_need[t])?;
        let deficit = qmin - q_river;
        // solver output meets floors to rounding; only real deficits are fined
        if deficit > 1e-9 * qmin.max(1.0) {
            r.fines += fine_rate * deficit * dt;
        }
        r.energy_mwh += power * dt_h;
        r.revenue += f.price * power * dt_h;
        r.solar_energy_mwh += solar * dt_h;
        r.demand_shortfall_mwh += (f.demand - power - solar).max(0.0) * dt_h;
        r.water_spilled_m3 += u.q_spill * dt;
        r.stress_events += usize::from(s > STRESS_EVENT_THRESHOLD);
        r.stress.push(s);
        r.qmin_used.push(qmin);
        r.q_river.push(q_river);
        r.power.push(power);
        r.controls.push(u);
        r.volumes.push(out.next.volume);
        state = out.next;
    }
    r.mean_stress = r.stress.iter().sum::<f64>() / n.max(1) as f64;
    Ok(r)
}

/// Fraction of steps in the predictor's window range where its floor is
/// below the need.
pub fn under_provision_rate(
    scenario: &Scenario,
    plant: &PlantSpec,
    params: &EcoPredictorParams,
    cfg: &EpisodeConfig,
    noise: &ForecastNoise,
    seed: u64,
) -> Result<f64, HarnessError> {
    let samples = training_samples(scenario, plant, params, cfg, noise, seed)?;
    if samples.is_empty() {
        return Err(HarnessError::Contract(
            "scenario too short for the predictor window".into(),
        ));
    }
    let mut under = 0usize;
    for s in &samples {
        let q = params
            .predict(&s.features, s.bounds)
            .map_err(|source| HarnessError::Predictor {
                policy: "adaptive",
                source,
            })?;
        under += usize::from(q < s.need);
    }
    Ok(under as f64 / samples.len() as f64)
}
