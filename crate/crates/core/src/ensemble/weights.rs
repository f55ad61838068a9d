use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{mae, spearman};

/// Validation metric the simplex weights are tuned for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMetric {
    #[default]
    Mae,
    Src,
}

impl WeightMetric {
    pub fn name(self) -> &'static str {
        match self {
            WeightMetric::Mae => "mae",
            WeightMetric::Src => "src",
        }
    }

    /// Value to minimize. An undefined rank correlation counts as zero.
    pub fn loss(self, y: &[f64], yhat: &[f64]) -> f64 {
        match self {
            WeightMetric::Mae => mae(y, yhat).unwrap_or(f64::INFINITY),
            WeightMetric::Src => -spearman(y, yhat).unwrap_or(0.0),
        }
    }
}

const INITIAL_STEP: f64 = 0.1;
const FINAL_STEP: f64 = 1.0 / 160.0;
const MIN_IMPROVEMENT: f64 = 1e-12;

/// `Σ_i w_i · preds[i]`.
pub fn blend(preds: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let v = preds.first().map_or(0, Vec::len);
    let mut out = vec![0.0; v];
    for (p, &wi) in preds.iter().zip(w) {
        if wi != 0.0 {
            for (o, x) in out.iter_mut().zip(p) {
                *o += wi * x;
            }
        }
    }
    out
}

fn dist_to_uniform(w: &[f64]) -> f64 {
    let u = 1.0 / w.len() as f64;
    w.iter().map(|x| (x - u) * (x - u)).sum::<f64>().sqrt()
}

/// Simplex weights for `preds` (one vector per member) on validation labels `y`.
///
/// The uniform vector and every vertex are scored first; the best of them
/// (ties resolved toward uniform) seeds a coordinate search that moves mass
/// between pairs of members in steps of 0.1 halved down to 1/160. A move is
/// kept only if it lowers the loss by more than 1e-12.
pub fn optimize_weights(preds: &[Vec<f64>], y: &[f64], metric: WeightMetric) -> Result<Vec<f64>> {
    let n = preds.len();
    if n == 0 {
        return Err(Error::Input("no member predictions to weight".into()));
    }
    if y.len() < 2 || preds.iter().any(|p| p.len() != y.len()) {
        return Err(Error::Shape(format!(
            "weight search needs at least 2 validation rows and one prediction per row (got {})",
            y.len()
        )));
    }
    if preds.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite member prediction or label in weight search".into()));
    }
    let loss = |w: &[f64]| metric.loss(y, &blend(preds, w));
    let mut best = vec![1.0 / n as f64; n];
    let mut best_loss = loss(&best);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let l = loss(&e);
        if l < best_loss || (l == best_loss && dist_to_uniform(&e) < dist_to_uniform(&best)) {
            best = e;
            best_loss = l;
        }
    }
    let mut step = INITIAL_STEP;
    loop {
        let mut improved = false;
        for to in 0..n {
            for from in 0..n {
                if to == from || best[from] <= 0.0 {
                    continue;
                }
                let amount = step.min(best[from]);
                let mut w = best.clone();
                w[to] += amount;
                w[from] = if amount == best[from] { 0.0 } else { w[from] - amount };
                let l = loss(&w);
                if l < best_loss - MIN_IMPROVEMENT {
                    best = w;
                    best_loss = l;
                    improved = true;
                }
            }
        }
        if !improved {
            if step <= FINAL_STEP {
                break;
            }
            step /= 2.0;
        }
    }
    Ok(best)
}
