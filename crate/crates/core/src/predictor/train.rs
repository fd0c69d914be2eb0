use serde::{Deserialize, Serialize};

use super::loss::StressLoss;
use super::network::{EcoPredictorParams, Sample};
use super::PredictorError;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: StressLoss,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 0.01,
            epochs: 400,
            batch_size: 32,
            seed: 0,
            loss: StressLoss::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EcoPredictorParams,
    /// Mean training loss before training (index 0) and after each epoch,
    /// in units of `normalization.flow_scale`.
    pub history: Vec<f64>,
    /// Epoch whose parameters were kept (0 = the initialisation).
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn initial_loss(&self) -> f64 {
        self.history[0]
    }

    pub fn best_loss(&self) -> f64 {
        self.history[self.best_epoch]
    }
}

/// Plain mini-batch gradient descent with a fixed step size.
///
/// Losses are evaluated on flows divided by the stored flow scale, which
/// only rescales the objective. The best parameters seen at any epoch
/// boundary are returned, so the final loss never exceeds the initial one.
pub fn train(
    init: &EcoPredictorParams,
    dataset: &[Sample],
    hyper: &TrainHyper,
) -> Result<TrainOutcome, PredictorError> {
    if dataset.is_empty() {
        return Err(PredictorError::Contract("training set is empty".into()));
    }
    if !(hyper.lr > 0.0 && hyper.lr.is_finite()) {
        return Err(PredictorError::Contract(format!(
            "learning rate must be positive, got {}",
            hyper.lr
        )));
    }
    if hyper.batch_size == 0 {
        return Err(PredictorError::Contract("batch_size must be positive".into()));
    }
    if !(hyper.loss.w_under > 0.0 && hyper.loss.w_over > 0.0) {
        return Err(PredictorError::Contract("loss weights must be positive".into()));
    }
    init.validate()?;
    let scale = init.normalization.flow_scale;
    let mut params = init.clone();
    let mut best = init.clone();
    let initial = params.mean_loss(dataset, &hyper.loss, scale)?;
    if !initial.is_finite() {
        return Err(PredictorError::Diverged { epoch: 0 });
    }
    let mut history = vec![initial];
    let mut best_epoch = 0;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = SeededRng::new(hyper.seed);
    let mut batch = Vec::with_capacity(hyper.batch_size);

    for epoch in 1..=hyper.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(hyper.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|i| dataset[*i].clone()));
            let g = params.grad(&batch, &hyper.loss, scale)?;
            params.step(&g, hyper.lr);
        }
        let loss = match params.mean_loss(dataset, &hyper.loss, scale) {
            Ok(l) if l.is_finite() => l,
            _ => return Err(PredictorError::Diverged { epoch }),
        };
        history.push(loss);
        if loss < history[best_epoch] {
            best_epoch = epoch;
            best = params.clone();
        }
    }
    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch,
    })
}
