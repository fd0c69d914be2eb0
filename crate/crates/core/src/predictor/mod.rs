//! Adaptive minimum-discharge predictor.
//!
//! A small tanh MLP maps a window of climate, flow and storage history to a
//! raw score, and a sigmoid squashes that score into a band `[L, U]` derived
//! from the current storage. The band is part of the forward pass, so no
//! parameter setting can produce a floor outside it.

mod bounds;
mod features;
mod loss;
mod network;
mod persist;
mod train;

pub use bounds::{bound_map, bounds_from_level, level_lower_bound, sigmoid, BoundPair};
pub use features::{
    featurize, steps_per_day, valid_range, FeatureWindow, ForecastNoise, History, Normalization, WindowSpec,
};
pub use loss::{stress_loss, StressLoss};
pub use network::{forward, grad, Activation, BoundMode, EcoPredictorParams, ParamGrad, Sample};
pub use persist::{load_params, params_from_json, params_to_json, save_params, PARAMS_FORMAT_VERSION};
pub use train::{train, TrainHyper, TrainOutcome};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("input has {actual} features, network expects {expected}")]
    Shape { expected: usize, actual: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Hydro(#[from] crate::hydro::HydroError),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("parameter file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
