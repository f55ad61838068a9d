use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mae;
use crate::dataset::Dataset;
use crate::ensemble::{blend, EnsembleModel};
use crate::error::{Error, Result};
use crate::rng::RngSeed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub block: String,
    /// Mean MAE increase over repeats.
    pub importance: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_mae: f64,
    pub repeats: usize,
    /// In feature column order.
    pub features: Vec<FeatureImportance>,
    /// Summed importance per block, in first-appearance order.
    pub blocks: Vec<(String, f64)>,
}

impl ImportanceReport {
    /// Features by decreasing importance; ties keep column order.
    pub fn ranked(&self) -> Vec<&FeatureImportance> {
        let mut v: Vec<&FeatureImportance> = self.features.iter().collect();
        v.sort_by(|a, b| b.importance.total_cmp(&a.importance));
        v
    }

    /// `rank,feature,importance` for the top `k` features.
    pub fn to_csv(&self, k: usize) -> String {
        let mut s = String::from("rank,feature,importance\n");
        for (i, f) in self.ranked().into_iter().take(k).enumerate() {
            s.push_str(&format!("{},{},{:.6}\n", i + 1, f.feature, f.importance));
        }
        s
    }
}

/// Ensemble predictions from per-fold standardized matrices.
fn predict_from(model: &EnsembleModel, xs: &[Vec<f64>], cols: usize) -> Result<Vec<f64>> {
    let rows = xs[0].len() / cols;
    let mut out = vec![0.0; rows];
    for (f, x) in model.folds.iter().zip(xs) {
        let preds = f
            .models
            .iter()
            .map(|m| Ok(m.predict(x, cols)?.into_iter().map(|v| f.label_mean + f.label_std * v).collect()))
            .collect::<Result<Vec<Vec<f64>>>>()?;
        for (o, v) in out.iter_mut().zip(blend(&preds, &f.weights)) {
            *o += v;
        }
    }
    let k = model.folds.len() as f64;
    out.iter_mut().for_each(|v| *v /= k);
    Ok(out)
}

/// Permutation importance of every feature column on `rows` with labels `y`.
///
/// A column is shuffled with the same row permutation in every fold's
/// standardized matrix, so all folds see one consistent perturbed dataset.
pub fn permutation_importance(
    model: &EnsembleModel,
    ds: &Dataset,
    rows: &[usize],
    y: &[f64],
    repeats: usize,
    seed: RngSeed,
) -> Result<ImportanceReport> {
    if repeats == 0 {
        return Err(Error::Input("importance needs at least one repeat".into()));
    }
    if rows.len() != y.len() || rows.is_empty() {
        return Err(Error::Shape("importance rows and labels must be nonempty and aligned".into()));
    }
    let mats = model
        .folds
        .iter()
        .map(|f| f.pipeline.transform(ds, rows))
        .collect::<Result<Vec<_>>>()?;
    let names = mats[0].col_names().to_vec();
    let cols = names.len();
    let xs: Vec<Vec<f64>> = mats.iter().map(|m| m.data().to_vec()).collect();
    let baseline = mae(y, &predict_from(model, &xs, cols)?)?;
    let n = rows.len();
    let features = (0..cols)
        .into_par_iter()
        .map(|c| {
            let diffs = (0..repeats)
                .map(|r| {
                    let perm = seed.derive(&[c as u64, r as u64]).rng().permutation(n);
                    let shuffled: Vec<Vec<f64>> = xs
                        .iter()
                        .map(|x| {
                            let mut s = x.clone();
                            for (i, &p) in perm.iter().enumerate() {
                                s[i * cols + c] = x[p * cols + c];
                            }
                            s
                        })
                        .collect();
                    Ok(mae(y, &predict_from(model, &shuffled, cols)?)? - baseline)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = diffs.iter().sum::<f64>() / repeats as f64;
            let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / repeats as f64;
            let feature = names[c].clone();
            let block = feature.split('.').next().unwrap_or_default().to_string();
            Ok(FeatureImportance {
                feature,
                block,
                importance: mean,
                std: var.sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut blocks: Vec<(String, f64)> = Vec::new();
    for f in &features {
        match blocks.iter_mut().find(|(b, _)| *b == f.block) {
            Some((_, v)) => *v += f.importance,
            None => blocks.push((f.block.clone(), f.importance)),
        }
    }
    Ok(ImportanceReport {
        baseline_mae: baseline,
        repeats,
        features,
        blocks,
    })
}
