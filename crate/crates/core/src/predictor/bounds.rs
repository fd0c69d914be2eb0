use serde::{Deserialize, Serialize};

use super::PredictorError;
use crate::hydro::{HydroError, PlantSpec};

/// Admissible band for the predicted discharge floor (m³/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
}

impl BoundPair {
    pub fn new(lower: f64, upper: f64) -> Result<Self, PredictorError> {
        if !(lower.is_finite() && upper.is_finite() && lower >= 0.0 && lower <= upper) {
            return Err(PredictorError::Domain(format!("invalid bound pair [{lower}, {upper}]")));
        }
        Ok(Self { lower, upper })
    }

    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.lower, self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// The lower edge as a function of storage, without range checks.
///
/// It rises linearly with the relative shortfall below the recommended
/// level and is capped at the upper edge.
pub fn level_lower_bound(volume: f64, plant: &PlantSpec) -> f64 {
    let deficit = ((plant.v_ref_recommended - volume) / plant.v_ref_recommended).max(0.0);
    (plant.q_eco_safety_floor * (1.0 + plant.level_gain * deficit)).min(plant.q_eco_cap)
}

/// Hard band for the predictor at the current storage.
pub fn bounds_from_level(volume: f64, plant: &PlantSpec) -> Result<BoundPair, PredictorError> {
    if !(volume >= plant.v_min && volume <= plant.v_max) {
        return Err(HydroError::OutOfRange {
            name: "volume",
            value: volume,
            lo: plant.v_min,
            hi: plant.v_max,
        }
        .into());
    }
    Ok(BoundPair {
        lower: level_lower_bound(volume, plant),
        upper: plant.q_eco_cap,
    })
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Squash a raw score into the band: `L + (U - L)·sigmoid(z)`.
pub fn bound_map(z: f64, b: BoundPair) -> Result<f64, PredictorError> {
    if !z.is_finite() {
        return Err(PredictorError::Domain(format!("raw score must be finite, got {z}")));
    }
    Ok(bound_map_unchecked(z, b))
}

pub(crate) fn bound_map_unchecked(z: f64, b: BoundPair) -> f64 {
    (b.lower + b.width() * sigmoid(z)).clamp(b.lower, b.upper)
}
