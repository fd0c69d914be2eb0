use serde::{Deserialize, Serialize};

use super::bounds::{bound_map_unchecked, sigmoid, BoundPair};
use super::features::{FeatureWindow, Normalization, WindowSpec};
use super::loss::StressLoss;
use super::PredictorError;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

/// How the raw network score is mapped into the admissible band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// `L + (U - L)·sigmoid(z)`
    Sigmoid,
}

/// Weights and biases of the discharge predictor plus everything needed to
/// reproduce its input transform.
///
/// `weights[l]` is the row-major `layer_sizes[l+1] × layer_sizes[l]`
/// matrix of layer `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcoPredictorParams {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub activation: Activation,
    pub bound_mode: BoundMode,
    pub window: WindowSpec,
    pub normalization: Normalization,
}

/// Gradient with the same layout as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl ParamGrad {
    fn zeros_like(p: &EcoPredictorParams) -> Self {
        Self {
            weights: p.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: p.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// One supervised example: a normalised feature vector, its band and the
/// ecological need it should cover.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub bounds: BoundPair,
    pub need: f64,
}

impl EcoPredictorParams {
    /// Default architecture `[4w + 2h, 16, 8, 1]`.
    pub fn default_layers(window: &WindowSpec) -> Vec<usize> {
        vec![window.feature_len(), 16, 8, 1]
    }

    fn check_layers(layer_sizes: &[usize]) -> Result<(), PredictorError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) || *layer_sizes.last().unwrap() != 1 {
            return Err(PredictorError::Contract(format!(
                "layer sizes {layer_sizes:?} must be nonzero and end in a single output"
            )));
        }
        Ok(())
    }

    pub fn zeros(
        layer_sizes: Vec<usize>,
        window: WindowSpec,
        normalization: Normalization,
    ) -> Result<Self, PredictorError> {
        Self::check_layers(&layer_sizes)?;
        let weights = layer_sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layer_sizes[1..].iter().map(|n| vec![0.0; *n]).collect();
        let p = Self {
            layer_sizes,
            weights,
            biases,
            activation: Activation::Tanh,
            bound_mode: BoundMode::Sigmoid,
            window,
            normalization,
        };
        p.validate()?;
        Ok(p)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(
        layer_sizes: Vec<usize>,
        window: WindowSpec,
        normalization: Normalization,
        seed: u64,
    ) -> Result<Self, PredictorError> {
        let mut p = Self::zeros(layer_sizes, window, normalization)?;
        let mut rng = SeededRng::new(seed);
        for (l, w) in p.weights.iter_mut().enumerate() {
            let (n_in, n_out) = (p.layer_sizes[l], p.layer_sizes[l + 1]);
            let a = (6.0 / (n_in + n_out) as f64).sqrt();
            for x in w.iter_mut() {
                *x = rng.uniform_range(-a, a);
            }
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PredictorError> {
        Self::check_layers(&self.layer_sizes)?;
        let n_layers = self.layer_sizes.len() - 1;
        if self.weights.len() != n_layers || self.biases.len() != n_layers {
            return Err(PredictorError::Contract(format!(
                "{} layers declared but {} weight and {} bias arrays",
                n_layers,
                self.weights.len(),
                self.biases.len()
            )));
        }
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            if self.weights[l].len() != n_in * n_out || self.biases[l].len() != n_out {
                return Err(PredictorError::Contract(format!(
                    "layer {l}: expected {n_out}x{n_in} weights and {n_out} biases, got {} and {}",
                    self.weights[l].len(),
                    self.biases[l].len()
                )));
            }
        }
        if self.layer_sizes[0] != self.window.feature_len() {
            return Err(PredictorError::Contract(format!(
                "input layer has {} units but the window produces {} features",
                self.layer_sizes[0],
                self.window.feature_len()
            )));
        }
        if self
            .weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .any(|x| !x.is_finite())
        {
            return Err(PredictorError::Contract("non-finite parameter".into()));
        }
        self.normalization.validate()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "flat parameter length");
        let mut i = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&flat[i..i + nw]);
            i += nw;
            b.copy_from_slice(&flat[i..i + nb]);
            i += nb;
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<(), PredictorError> {
        if x.len() != self.input_dim() {
            return Err(PredictorError::Shape {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Activations of every layer; `acts[0]` is the input and the last
    /// entry holds the single raw score.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n_layers = self.weights.len();
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let prev = &acts[l];
            let w = &self.weights[l];
            let mut out = self.biases[l].clone();
            for (j, o) in out.iter_mut().enumerate() {
                let row = &w[j * n_in..(j + 1) * n_in];
                *o += row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
            }
            if l + 1 < n_layers {
                for o in out.iter_mut() {
                    *o = o.tanh();
                }
            }
            debug_assert_eq!(out.len(), n_out);
            acts.push(out);
        }
        acts
    }

    /// Raw score before the band mapping.
    pub fn raw_score(&self, x: &[f64]) -> Result<f64, PredictorError> {
        self.check_input(x)?;
        Ok(self.activations(x).last().unwrap()[0])
    }

    pub fn predict(&self, x: &[f64], b: BoundPair) -> Result<f64, PredictorError> {
        let z = self.raw_score(x)?;
        if !z.is_finite() {
            return Err(PredictorError::Domain(format!("raw score must be finite, got {z}")));
        }
        Ok(bound_map_unchecked(z, b))
    }

    /// Mean loss over a batch; losses are taken on `pred / scale`.
    pub fn mean_loss(&self, batch: &[Sample], loss: &StressLoss, scale: f64) -> Result<f64, PredictorError> {
        let mut total = 0.0;
        for s in batch {
            let pred = self.predict(&s.features, s.bounds)?;
            total += loss.value(pred / scale, s.need / scale);
        }
        Ok(total / batch.len().max(1) as f64)
    }

    /// Reverse-mode gradient of [`Self::mean_loss`].
    pub fn grad(&self, batch: &[Sample], loss: &StressLoss, scale: f64) -> Result<ParamGrad, PredictorError> {
        if batch.is_empty() {
            return Err(PredictorError::Contract("gradient of an empty batch".into()));
        }
        let mut g = ParamGrad::zeros_like(self);
        let n_layers = self.weights.len();
        let inv_n = 1.0 / batch.len() as f64;
        for s in batch {
            self.check_input(&s.features)?;
            let acts = self.activations(&s.features);
            let z = acts[n_layers][0];
            let sig = sigmoid(z);
            let pred = bound_map_unchecked(z, s.bounds);
            let dl_dpred = loss.derivative(pred / scale, s.need / scale) / scale;
            // delta = dLoss/d(pre-activation) of the current layer
            let mut delta = vec![inv_n * dl_dpred * s.bounds.width() * sig * (1.0 - sig)];
            for l in (0..n_layers).rev() {
                let n_in = self.layer_sizes[l];
                let input = &acts[l];
                let gw = &mut g.weights[l];
                for (j, d) in delta.iter().enumerate() {
                    g.biases[l][j] += d;
                    let row = &mut gw[j * n_in..(j + 1) * n_in];
                    for (gw_ji, a) in row.iter_mut().zip(input) {
                        *gw_ji += d * a;
                    }
                }
                if l == 0 {
                    break;
                }
                let w = &self.weights[l];
                // input[i] = tanh(pre_i) for hidden layers
                delta = (0..n_in)
                    .map(|i| {
                        let back: f64 = delta.iter().enumerate().map(|(j, d)| d * w[j * n_in + i]).sum();
                        back * (1.0 - input[i] * input[i])
                    })
                    .collect();
            }
        }
        Ok(g)
    }

    /// Apply `params -= lr * grad`.
    pub fn step(&mut self, g: &ParamGrad, lr: f64) {
        for (w, gw) in self.weights.iter_mut().zip(&g.weights) {
            for (x, d) in w.iter_mut().zip(gw) {
                *x -= lr * d;
            }
        }
        for (b, gb) in self.biases.iter_mut().zip(&g.biases) {
            for (x, d) in b.iter_mut().zip(gb) {
                *x -= lr * d;
            }
        }
    }
}

/// Predicted discharge floor for a feature window, always inside `b`.
pub fn forward(params: &EcoPredictorParams, x: &FeatureWindow, b: BoundPair) -> Result<f64, PredictorError> {
    params.predict(&x.to_vec(), b)
}

/// Gradient of the mean stress loss in physical units.
pub fn grad(params: &EcoPredictorParams, batch: &[Sample], loss: &StressLoss) -> Result<ParamGrad, PredictorError> {
    params.grad(batch, loss, 1.0)
}
