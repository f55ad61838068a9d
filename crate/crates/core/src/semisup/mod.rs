//! Confidence-thresholded pseudo-labeling on top of the K-fold ensemble.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::ensemble::{train_ensemble, EnsembleConfig, EnsembleModel, TrainRow};
use crate::error::{Error, Result};
use crate::eval::Metrics;
use crate::features::FeatureConfig;
use crate::models::ModelRegistry;
use crate::rng::RngSeed;

/// How agreement between member predictions becomes a confidence score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceRule {
    /// Negative population standard deviation across all K·N members.
    #[default]
    NegStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoConfig {
    pub enabled: bool,
    pub alpha: f64,
    pub max_iterations: usize,
    pub confidence: ConfidenceRule,
    pub sample_weight: f64,
}

impl Default for PseudoConfig {
    fn default() -> Self {
        PseudoConfig {
            enabled: true,
            alpha: 0.5,
            max_iterations: 2,
            confidence: ConfidenceRule::NegStd,
            sample_weight: 0.5,
        }
    }
}

impl PseudoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::config("pseudo.max_iterations", "must be at least 1"));
        }
        if !(self.sample_weight > 0.0 && self.sample_weight <= 1.0) {
            return Err(Error::config(
                "pseudo.sample_weight",
                format!("must lie in (0, 1], got {}", self.sample_weight),
            ));
        }
        if !self.alpha.is_finite() {
            return Err(Error::config("pseudo.alpha", "must be finite"));
        }
        Ok(())
    }

    /// Whether any pseudo-labeling round will run.
    pub fn active(&self) -> bool {
        self.enabled && self.max_iterations > 1
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-row confidence from member predictions (`members[m][row]`).
pub fn confidence_scores(members: &[Vec<f64>], rule: ConfidenceRule) -> Result<Vec<f64>> {
    if members.len() < 2 {
        return Err(Error::Degenerate(format!(
            "confidence needs at least 2 member predictions per row, got {}",
            members.len()
        )));
    }
    let rows = members[0].len();
    if members.iter().any(|m| m.len() != rows) {
        return Err(Error::Shape("member prediction vectors differ in length".into()));
    }
    let mut col = vec![0.0; members.len()];
    Ok((0..rows)
        .map(|r| {
            for (c, m) in col.iter_mut().zip(members) {
                *c = m[r];
            }
            match rule {
                ConfidenceRule::NegStd => -mean_std(&col).1,
            }
        })
        .collect())
}

/// Rows chosen for pseudo-labeling and the threshold that chose them.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// `(position in the pool, pseudo-label, weight)`.
    pub rows: Vec<(usize, f64, f64)>,
    pub tau: f64,
    pub confidence_mean: f64,
    pub confidence_std: f64,
}

/// Keep rows whose confidence is at least `τ = mean + α·std`; every row when std is 0.
pub fn select_pseudo(confidences: &[f64], predictions: &[f64], cfg: &PseudoConfig) -> Result<Selection> {
    if confidences.len() != predictions.len() {
        return Err(Error::Shape("confidences and predictions differ in length".into()));
    }
    if confidences.is_empty() {
        return Ok(Selection {
            rows: vec![],
            tau: 0.0,
            confidence_mean: 0.0,
            confidence_std: 0.0,
        });
    }
    if confidences.iter().chain(predictions).any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite confidence or prediction".into()));
    }
    let (mean, std) = mean_std(confidences);
    let tau = mean + cfg.alpha * std;
    let rows = confidences
        .iter()
        .zip(predictions)
        .enumerate()
        .filter(|(_, (&c, _))| std == 0.0 || c >= tau)
        .map(|(i, (_, &p))| (i, p, cfg.sample_weight))
        .collect();
    Ok(Selection {
        rows,
        tau,
        confidence_mean: mean,
        confidence_std: std,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub pool: usize,
    pub selected: usize,
    pub tau: f64,
    pub confidence_mean: f64,
    pub confidence_std: f64,
    /// Out-of-fold validation metrics of the model that produced the pseudo-labels.
    pub before: Metrics,
    /// Out-of-fold validation metrics after retraining with them.
    pub after: Option<Metrics>,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PseudoReport {
    pub iterations: Vec<IterationReport>,
}

impl PseudoReport {
    /// One JSON object per iteration, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        self.iterations
            .iter()
            .map(|it| serde_json::to_string(it).expect("report serializes") + "\n")
            .collect()
    }
}

const MIN_MAE_GAIN: f64 = 1e-6;

/// Train on `labeled`, then retrain with refreshed pseudo-labels for `pool`
/// rows until `max_iterations` or until out-of-fold MAE stops improving.
/// The best model seen is returned.
#[allow(clippy::too_many_arguments)]
pub fn pseudo_label_loop(
    ds: &Dataset,
    labeled: &[TrainRow],
    pool: &[usize],
    ensemble: &EnsembleConfig,
    features: &FeatureConfig,
    registry: &ModelRegistry,
    cfg: &PseudoConfig,
    seed: RngSeed,
) -> Result<(EnsembleModel, PseudoReport)> {
    cfg.validate()?;
    let mut best = train_ensemble(ds, labeled, ensemble, features, registry, seed)?;
    let mut report = PseudoReport::default();
    if !cfg.enabled {
        return Ok((best, report));
    }
    for iteration in 1..cfg.max_iterations {
        let before = best.summary.oof;
        let selection = if pool.is_empty() {
            select_pseudo(&[], &[], cfg)?
        } else {
            let members = best.member_predictions(ds, pool)?;
            let conf = confidence_scores(&members, cfg.confidence)?;
            let preds = best.predict(ds, pool)?;
            select_pseudo(&conf, &preds, cfg)?
        };
        let mut it = IterationReport {
            iteration,
            pool: pool.len(),
            selected: selection.rows.len(),
            tau: selection.tau,
            confidence_mean: selection.confidence_mean,
            confidence_std: selection.confidence_std,
            before,
            after: None,
            accepted: false,
        };
        if selection.rows.is_empty() {
            report.iterations.push(it);
            break;
        }
        let mut rows = labeled.to_vec();
        rows.extend(selection.rows.iter().map(|&(i, label, weight)| TrainRow {
            row: pool[i],
            label,
            weight,
            pseudo: true,
        }));
        let candidate = train_ensemble(ds, &rows, ensemble, features, registry, seed)?;
        it.after = Some(candidate.summary.oof);
        it.accepted = candidate.summary.oof.mae < before.mae - MIN_MAE_GAIN;
        let accepted = it.accepted;
        report.iterations.push(it);
        if !accepted {
            break;
        }
        best = candidate;
    }
    Ok((best, report))
}
