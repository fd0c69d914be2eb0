use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::simulate;
use super::{DemandMode, OptimizerError, Problem};
use crate::predictor::level_lower_bound;

/// Signed slack of every constraint at every step (negative = violated).
///
/// Storage slacks are in m³, demand in MW, and the release constraints in
/// m³/s. Storage slacks refer to the end of the step, the level guard to its
/// start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackReport {
    pub volumes: Vec<f64>,
    pub power: Vec<f64>,
    pub storage_lower: Vec<f64>,
    pub storage_upper: Vec<f64>,
    /// `power + solar - demand`; only binding in hard-demand mode.
    pub demand: Vec<f64>,
    pub river_floor: Vec<f64>,
    pub irrigation: Vec<f64>,
    pub level_guard: Option<Vec<f64>>,
    /// Smallest distance to a release limit per step.
    pub bounds: Vec<f64>,
    pub revenue: f64,
    pub shortfall_mwh: f64,
    pub shortfall_penalty: f64,
    /// Revenue minus the soft-demand penalty.
    pub objective: f64,
    hard_demand: bool,
    v_max: f64,
    power_ref: f64,
}

fn worst(slack: &[f64]) -> f64 {
    slack.iter().fold(0.0f64, |acc, s| acc.max(-s)) + 0.0
}

impl SlackReport {
    /// Largest violation per family. Storage is measured as a fraction of
    /// `v_max`, demand as a fraction of the plant's maximum power, and the
    /// release families in m³/s.
    pub fn violations(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        out.insert(
            "storage".to_string(),
            worst(&self.storage_lower).max(worst(&self.storage_upper)) / self.v_max,
        );
        if self.hard_demand {
            out.insert("demand".to_string(), worst(&self.demand) / self.power_ref);
        }
        out.insert("river_floor".to_string(), worst(&self.river_floor));
        out.insert("irrigation".to_string(), worst(&self.irrigation));
        if let Some(g) = &self.level_guard {
            out.insert("level_guard".to_string(), worst(g));
        }
        out.insert("bounds".to_string(), worst(&self.bounds));
        out
    }

    pub fn max_violation(&self) -> f64 {
        self.violations().values().fold(0.0, |a, b| a.max(*b))
    }
}

/// Evaluate a flat `[q_turb, q_eco, q_irr, q_spill]` schedule without clipping.
pub fn check_solution(p: &Problem, theta: &[f64]) -> Result<SlackReport, OptimizerError> {
    let n = p.horizon();
    if theta.len() != p.n_theta() {
        return Err(OptimizerError::Contract(format!(
            "schedule has {} values, problem needs {}",
            theta.len(),
            p.n_theta()
        )));
    }
    let (volumes, power) = simulate(p, theta);
    let plant = &p.plant;
    let caps = p.caps();
    let dt_h = plant.dt / 3600.0;
    let mut r = SlackReport {
        storage_lower: volumes[1..].iter().map(|v| v - plant.v_min).collect(),
        storage_upper: volumes[1..].iter().map(|v| plant.v_max - v).collect(),
        demand: (0..n)
            .map(|t| power[t] + p.solar(t) - p.scenario.forcing[t].demand)
            .collect(),
        river_floor: (0..n)
            .map(|t| theta[4 * t + 1] + theta[4 * t + 3] - p.qmin_river[t])
            .collect(),
        irrigation: (0..n).map(|t| theta[4 * t + 2] - p.qmin_irr).collect(),
        level_guard: p.level_guard.then(|| {
            (0..n)
                .map(|t| theta[4 * t + 1] + theta[4 * t + 3] - level_lower_bound(volumes[t], plant))
                .collect()
        }),
        bounds: (0..n)
            .map(|t| {
                (0..4)
                    .map(|k| theta[4 * t + k].min(caps[k] - theta[4 * t + k]))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect(),
        revenue: (0..n).map(|t| p.scenario.forcing[t].price * power[t] * dt_h).sum(),
        shortfall_mwh: 0.0,
        shortfall_penalty: 0.0,
        objective: 0.0,
        hard_demand: p.demand_mode == DemandMode::Hard,
        v_max: plant.v_max,
        power_ref: plant.max_power().max(1e-12),
        volumes,
        power,
    };
    r.shortfall_mwh = r.demand.iter().map(|d| (-d).max(0.0) * dt_h).sum();
    if let DemandMode::Soft { penalty } = p.demand_mode {
        r.shortfall_penalty = penalty * r.shortfall_mwh;
    }
    r.objective = r.revenue - r.shortfall_penalty;
    Ok(r)
}
