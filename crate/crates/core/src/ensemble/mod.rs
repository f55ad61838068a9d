//! K-fold training of heterogeneous members with per-fold simplex weights
//! and fold-averaged inference.

mod folds;
mod weights;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use folds::{make_folds, make_stratified_folds, FoldPlan};
pub use weights::{blend, optimize_weights, WeightMetric};

use crate::artifact::{Reader, Writer};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::Metrics;
use crate::features::{iqr_filter, FeatureConfig, FeaturePipeline};
use crate::models::{HuberParams, ModelParams, ModelRegistry, Regressor, TrainData};
use crate::rng::{str_tag, RngSeed};

const MAGIC: &[u8; 4] = b"HFEN";
const PIPELINE_TAG: u64 = 0x7069_7065;
const SPLIT_TAG: u64 = 0x7370_6c69;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub k: usize,
    pub members: Vec<String>,
    pub metric: WeightMetric,
    pub huber_delta: f64,
    pub iqr: bool,
    pub iqr_multiplier: f64,
    pub stratify: bool,
    /// One train/validation split instead of K folds.
    pub single_split: bool,
    pub validation_fraction: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            k: 5,
            members: vec!["gbdt".into(), "mlp".into(), "ridge".into()],
            metric: WeightMetric::Mae,
            huber_delta: 1.0,
            iqr: true,
            iqr_multiplier: 1.5,
            stratify: false,
            single_split: false,
            validation_fraction: 0.2,
        }
    }
}

/// One training row: a dataset index, its target and sample weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRow {
    pub row: usize,
    pub label: f64,
    pub weight: f64,
    /// Pseudo rows train every fold and never validate.
    pub pseudo: bool,
}

impl TrainRow {
    pub fn labeled(row: usize, label: f64) -> Self {
        TrainRow {
            row,
            label,
            weight: 1.0,
            pseudo: false,
        }
    }
}

/// Validation results of one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_rows: usize,
    pub pseudo_rows: usize,
    pub iqr_removed: usize,
    pub validation: Metrics,
    pub member_validation: Vec<Metrics>,
    pub weights: Vec<f64>,
}

#[derive(Debug)]
pub struct FoldModel {
    pub pipeline: FeaturePipeline,
    pub label_mean: f64,
    pub label_std: f64,
    pub models: Vec<Box<dyn Regressor>>,
    pub weights: Vec<f64>,
    pub report: FoldReport,
}

impl FoldModel {
    /// Member predictions for `rows` on the label scale, one vector per member.
    pub fn member_predictions(&self, ds: &Dataset, rows: &[usize]) -> Result<Vec<Vec<f64>>> {
        let x = self.pipeline.transform(ds, rows)?;
        self.models
            .iter()
            .map(|m| {
                let p = m.predict(x.data(), x.cols())?;
                Ok(p.into_iter().map(|v| self.label_mean + self.label_std * v).collect())
            })
            .collect()
    }

    pub fn predict(&self, ds: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
        Ok(blend(&self.member_predictions(ds, rows)?, &self.weights))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub k: usize,
    pub members: Vec<String>,
    pub metric: WeightMetric,
    pub seed: RngSeed,
    pub single_split: bool,
    /// Out-of-fold metrics over every validated row.
    pub oof: Metrics,
}

#[derive(Debug)]
pub struct EnsembleModel {
    pub summary: EnsembleSummary,
    pub folds: Vec<FoldModel>,
}

fn weighted_moments(y: &[f64], w: &[f64]) -> (f64, f64) {
    let total: f64 = w.iter().sum();
    let mean = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total;
    let var = y.iter().zip(w).map(|(a, b)| b * (a - mean) * (a - mean)).sum::<f64>() / total;
    let std = var.sqrt();
    (mean, if std > 1e-12 { std } else { 1.0 })
}

/// Validation index sets (positions into the real rows).
fn validation_sets(real: &[TrainRow], cfg: &EnsembleConfig, seed: RngSeed) -> Result<Vec<Vec<usize>>> {
    let n = real.len();
    if cfg.single_split {
        if !(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0) {
            return Err(Error::config(
                "ensemble.validation_fraction",
                format!("must lie in (0, 1), got {}", cfg.validation_fraction),
            ));
        }
        let v = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n.saturating_sub(1));
        if n < 2 {
            return Err(Error::Fold(format!("single split needs at least 2 rows, got {n}")));
        }
        let order = seed.derive(&[SPLIT_TAG]).rng().permutation(n);
        let mut val = order[..v].to_vec();
        val.sort_unstable();
        return Ok(vec![val]);
    }
    let plan = if cfg.stratify {
        let labels: Vec<f64> = real.iter().map(|r| r.label).collect();
        make_stratified_folds(&labels, cfg.k, seed)?
    } else {
        make_folds(n, cfg.k, seed)?
    };
    Ok((0..plan.k).map(|f| plan.validation(f)).collect())
}

struct FoldInput<'a> {
    fold: usize,
    validation: Vec<usize>,
    real: &'a [TrainRow],
    pseudo: &'a [TrainRow],
}

fn train_fold(
    ds: &Dataset,
    input: FoldInput<'_>,
    cfg: &EnsembleConfig,
    features: &FeatureConfig,
    registry: &ModelRegistry,
    seed: RngSeed,
) -> Result<(FoldModel, Vec<(usize, f64)>)> {
    let FoldInput {
        fold,
        validation,
        real,
        pseudo,
    } = input;
    let in_fold = |e: Error| match e {
        e @ Error::Member { .. } => e,
        e => Error::InFold {
            fold,
            source: Box::new(e),
        },
    };
    let mut is_val = vec![false; real.len()];
    validation.iter().for_each(|&i| is_val[i] = true);
    let train_real: Vec<TrainRow> = real.iter().zip(&is_val).filter(|(_, v)| !**v).map(|(r, _)| *r).collect();
    let kept: Vec<TrainRow> = if cfg.iqr {
        let labels: Vec<f64> = train_real.iter().map(|r| r.label).collect();
        let keep = iqr_filter(&labels, cfg.iqr_multiplier).map_err(in_fold)?;
        train_real.iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| *r).collect()
    } else {
        train_real.clone()
    };
    let iqr_removed = train_real.len() - kept.len();
    let train: Vec<TrainRow> = kept.iter().chain(pseudo).copied().collect();
    let train_idx: Vec<usize> = train.iter().map(|r| r.row).collect();
    let pipeline = FeaturePipeline::fit(ds, &train_idx, features, seed.derive(&[fold as u64, PIPELINE_TAG]))
        .map_err(in_fold)?;
    let x = pipeline.transform(ds, &train_idx).map_err(in_fold)?;
    let raw_y: Vec<f64> = train.iter().map(|r| r.label).collect();
    let w: Vec<f64> = train.iter().map(|r| r.weight).collect();
    let (label_mean, label_std) = weighted_moments(&raw_y, &w);
    let y: Vec<f64> = raw_y.iter().map(|v| (v - label_mean) / label_std).collect();
    let data = TrainData::new(x.data(), x.cols(), &y, &w, x.block_spans()).map_err(in_fold)?;
    let huber = HuberParams::new(cfg.huber_delta).map_err(in_fold)?;
    let models: Vec<Box<dyn Regressor>> = cfg
        .members
        .par_iter()
        .map(|name| {
            let wrap = |e: Error| Error::Member {
                fold,
                member: name.clone(),
                source: Box::new(e),
            };
            let factory = registry.get(name).map_err(wrap)?;
            factory
                .fit(&data, huber, seed.derive(&[fold as u64, str_tag(name)]))
                .map_err(wrap)
        })
        .collect::<Result<_>>()?;

    let val_rows: Vec<usize> = validation.iter().map(|&i| real[i].row).collect();
    let val_y: Vec<f64> = validation.iter().map(|&i| real[i].label).collect();
    let mut fm = FoldModel {
        pipeline,
        label_mean,
        label_std,
        models,
        weights: vec![],
        report: FoldReport {
            fold,
            train_rows: train.len(),
            pseudo_rows: pseudo.len(),
            iqr_removed,
            validation: Metrics { src: 0.0, mae: 0.0, n: 0 },
            member_validation: vec![],
            weights: vec![],
        },
    };
    let preds = fm.member_predictions(ds, &val_rows).map_err(in_fold)?;
    let weights = if val_y.len() >= 2 {
        optimize_weights(&preds, &val_y, cfg.metric).map_err(in_fold)?
    } else {
        vec![1.0 / preds.len() as f64; preds.len()]
    };
    let blended = blend(&preds, &weights);
    fm.report.validation = Metrics::compute_lenient(&val_y, &blended).map_err(in_fold)?;
    fm.report.member_validation = preds
        .iter()
        .map(|p| Metrics::compute_lenient(&val_y, p))
        .collect::<Result<_>>()
        .map_err(in_fold)?;
    fm.report.weights = weights.clone();
    fm.weights = weights;
    let oof = validation.iter().zip(blended).map(|(&i, p)| (i, p)).collect();
    Ok((fm, oof))
}

/// Train every fold. Real rows are split into validation folds; pseudo rows
/// join every fold's training set.
pub fn train_ensemble(
    ds: &Dataset,
    rows: &[TrainRow],
    cfg: &EnsembleConfig,
    features: &FeatureConfig,
    registry: &ModelRegistry,
    seed: RngSeed,
) -> Result<EnsembleModel> {
    if cfg.members.is_empty() {
        return Err(Error::config("ensemble.members", "at least one member is required"));
    }
    let real: Vec<TrainRow> = rows.iter().filter(|r| !r.pseudo).copied().collect();
    let pseudo: Vec<TrainRow> = rows.iter().filter(|r| r.pseudo).copied().collect();
    if real.is_empty() {
        return Err(Error::Degenerate("no labeled training rows".into()));
    }
    if rows.iter().any(|r| r.row >= ds.len() || !r.label.is_finite()) {
        return Err(Error::Input("training row out of range or with non-finite label".into()));
    }
    let sets = validation_sets(&real, cfg, seed)?;
    let results: Vec<(FoldModel, Vec<(usize, f64)>)> = sets
        .into_par_iter()
        .enumerate()
        .map(|(fold, validation)| {
            train_fold(
                ds,
                FoldInput {
                    fold,
                    validation,
                    real: &real,
                    pseudo: &pseudo,
                },
                cfg,
                features,
                registry,
                seed,
            )
        })
        .collect::<Result<_>>()?;
    let mut oof: Vec<(usize, f64)> = results.iter().flat_map(|(_, o)| o.iter().copied()).collect();
    oof.sort_by_key(|&(i, _)| i);
    let y: Vec<f64> = oof.iter().map(|&(i, _)| real[i].label).collect();
    let p: Vec<f64> = oof.iter().map(|&(_, v)| v).collect();
    let summary = EnsembleSummary {
        k: results.len(),
        members: cfg.members.clone(),
        metric: cfg.metric,
        seed,
        single_split: cfg.single_split,
        oof: Metrics::compute_lenient(&y, &p)?,
    };
    Ok(EnsembleModel {
        summary,
        folds: results.into_iter().map(|(f, _)| f).collect(),
    })
}

impl EnsembleModel {
    /// Fold-averaged predictions for dataset rows.
    pub fn predict(&self, ds: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
        let per_fold: Vec<Vec<f64>> = self
            .folds
            .par_iter()
            .enumerate()
            .map(|(k, f)| f.predict(ds, rows).map_err(|e| Error::InFold { fold: k, source: Box::new(e) }))
            .collect::<Result<_>>()?;
        let mut out = vec![0.0; rows.len()];
        for p in &per_fold {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        let k = per_fold.len() as f64;
        out.iter_mut().for_each(|v| *v /= k);
        Ok(out)
    }

    /// All K·N member predictions on the label scale, fold-major.
    pub fn member_predictions(&self, ds: &Dataset, rows: &[usize]) -> Result<Vec<Vec<f64>>> {
        let per_fold: Vec<Vec<Vec<f64>>> = self
            .folds
            .par_iter()
            .enumerate()
            .map(|(k, f)| f.member_predictions(ds, rows).map_err(|e| Error::InFold { fold: k, source: Box::new(e) }))
            .collect::<Result<_>>()?;
        Ok(per_fold.into_iter().flatten().collect())
    }

    pub fn fold_reports(&self) -> Vec<&FoldReport> {
        self.folds.iter().map(|f| &f.report).collect()
    }

    /// Standardized feature columns seen by the members (identical across folds).
    pub fn feature_names(&self) -> &[String] {
        &self.folds[0].pipeline.col_names
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(MAGIC);
        w.section("summary", |w| {
            w.str(&serde_json::to_string(&self.summary).expect("summary serializes"))
        });
        w.usize(self.folds.len());
        for f in &self.folds {
            w.section("fold", |w| {
                w.f64(f.label_mean);
                w.f64(f.label_std);
                w.f64s(&f.weights);
                w.str(&serde_json::to_string(&f.report).expect("report serializes"));
                w.section("pipeline", |w| f.pipeline.write(w));
                w.usize(f.models.len());
                for m in &f.models {
                    w.section("member", |w| ModelRegistry::save(m.as_ref(), w));
                }
            });
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let registry = ModelRegistry::with_builtins(&ModelParams::default());
        let mut r = Reader::with_header(bytes, MAGIC)?;
        let mut s = r.section("summary")?;
        let text = s.str()?;
        let summary: EnsembleSummary =
            serde_json::from_str(&text).map_err(|e| s.err(format!("bad ensemble summary: {e}")))?;
        let count = r.usize()?;
        if count == 0 || count != summary.k {
            return Err(r.err(format!("summary lists {} folds, artifact holds {count}", summary.k)));
        }
        let mut folds = Vec::with_capacity(count);
        for _ in 0..count {
            let mut s = r.section("fold")?;
            let label_mean = s.f64()?;
            let label_std = s.f64()?;
            let weights = s.f64s()?;
            let text = s.str()?;
            let report: FoldReport = serde_json::from_str(&text).map_err(|e| s.err(format!("bad fold report: {e}")))?;
            let mut ps = s.section("pipeline")?;
            let pipeline = FeaturePipeline::read(&mut ps)?;
            ps.finish()?;
            let n = s.usize()?;
            if n != summary.members.len() || weights.len() != n {
                return Err(s.err("fold member count differs from the summary"));
            }
            let mut models = Vec::with_capacity(n);
            for name in &summary.members {
                let mut ms = s.section("member")?;
                let m = registry.load(&mut ms)?;
                ms.finish()?;
                if m.kind() != name {
                    return Err(s.err(format!("expected member `{name}`, found `{}`", m.kind())));
                }
                models.push(m);
            }
            s.finish()?;
            folds.push(FoldModel {
                pipeline,
                label_mean,
                label_std,
                models,
                weights,
                report,
            });
        }
        r.finish()?;
        Ok(EnsembleModel { summary, folds })
    }
}
