use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transition point δ between the quadratic and linear regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuberParams {
    pub delta: f64,
}

impl HuberParams {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Input(format!("Huber delta must be finite and positive, got {delta}")));
        }
        Ok(HuberParams { delta })
    }
}

impl Default for HuberParams {
    fn default() -> Self {
        HuberParams { delta: 1.0 }
    }
}

/// Huber loss of predicting `yhat` for target `y`, and its derivative in `yhat`.
#[inline]
pub fn huber_loss(y: f64, yhat: f64, p: HuberParams) -> (f64, f64) {
    let r = y - yhat;
    let d = p.delta;
    if r.abs() <= d {
        (0.5 * r * r, -r)
    } else {
        (d * r.abs() - 0.5 * d * d, -d * r.signum())
    }
}

/// Weighted mean Huber loss.
pub fn mean_huber(y: &[f64], yhat: &[f64], w: &[f64], p: HuberParams) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&a, &b), &wi) in y.iter().zip(yhat).zip(w) {
        num += wi * huber_loss(a, b, p).0;
        den += wi;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}
