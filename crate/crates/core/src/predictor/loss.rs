use serde::{Deserialize, Serialize};

/// Asymmetric squared-hinge penalty: under-provision costs `w_under` per
/// unit², over-provision `w_over`.
///
/// The target is the ecological need rather than past releases, so the
/// loss expresses "risk to the river" instead of "distance from history".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressLoss {
    pub w_under: f64,
    pub w_over: f64,
}

impl Default for StressLoss {
    fn default() -> Self {
        Self {
            w_under: 10.0,
            w_over: 1.0,
        }
    }
}

impl StressLoss {
    pub fn value(&self, pred: f64, need: f64) -> f64 {
        let e = pred - need;
        if e < 0.0 {
            self.w_under * e * e
        } else {
            self.w_over * e * e
        }
    }

    /// d(loss)/d(pred); zero at `pred == need` from both sides.
    pub fn derivative(&self, pred: f64, need: f64) -> f64 {
        let e = pred - need;
        if e < 0.0 {
            2.0 * self.w_under * e
        } else {
            2.0 * self.w_over * e
        }
    }
}

pub fn stress_loss(pred: f64, need: f64, w_under: f64, w_over: f64) -> f64 {
    StressLoss { w_under, w_over }.value(pred, need)
}
