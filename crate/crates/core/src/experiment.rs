//! A full run: hold out labeled posts, train with optional pseudo-labeling,
//! score the held-out posts.

use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::ensemble::{EnsembleModel, TrainRow};
use crate::error::{Error, Result};
use crate::eval::Metrics;
use crate::models::ModelRegistry;
use crate::rng::RngSeed;
use crate::semisup::{pseudo_label_loop, PseudoReport};

const HOLDOUT_TAG: u64 = 0x686f_6c64;
const ENSEMBLE_TAG: u64 = 0x656e_7365;

/// Labeled rows split into `(train, holdout)`, each in ascending order.
pub fn holdout_split(ds: &Dataset, fraction: f64, seed: RngSeed) -> (Vec<usize>, Vec<usize>) {
    let labeled = ds.labeled_rows();
    let n_hold = (labeled.len() as f64 * fraction).round() as usize;
    let order = seed.derive(&[HOLDOUT_TAG]).rng().permutation(labeled.len());
    let mut hold: Vec<usize> = order[..n_hold].iter().map(|&i| labeled[i]).collect();
    let mut train: Vec<usize> = order[n_hold..].iter().map(|&i| labeled[i]).collect();
    hold.sort_unstable();
    train.sort_unstable();
    (train, hold)
}

/// Copy of `ds` with the labels of `rows` removed.
pub fn mask_labels(ds: &Dataset, rows: &[usize]) -> Dataset {
    let mut masked = ds.clone();
    for &r in rows {
        masked.posts[r].label = None;
    }
    masked
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub model: EnsembleModel,
    pub pseudo: PseudoReport,
    pub train_rows: Vec<usize>,
    pub holdout_rows: Vec<usize>,
    pub holdout_labels: Vec<f64>,
    pub holdout_predictions: Vec<f64>,
    /// `None` when nothing was held out.
    pub holdout: Option<Metrics>,
}

pub fn ensemble_seed(cfg: &RunConfig) -> RngSeed {
    RngSeed(cfg.seed).derive(&[ENSEMBLE_TAG])
}

/// Train on the non-held-out labeled posts and evaluate on the rest. Held-out
/// labels are stripped before training starts, so nothing downstream can read them.
pub fn run_experiment(ds: &Dataset, cfg: &RunConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (train_rows, holdout_rows) = holdout_split(ds, cfg.eval.holdout_fraction, RngSeed(cfg.seed));
    if train_rows.is_empty() {
        return Err(Error::Degenerate("no labeled posts left for training".into()));
    }
    let masked = mask_labels(ds, &holdout_rows);
    let labeled: Vec<TrainRow> = train_rows
        .iter()
        .map(|&r| TrainRow::labeled(r, masked.posts[r].label.expect("training rows are labeled")))
        .collect();
    let mut pool = masked.unlabeled_rows();
    pool.sort_unstable();
    let registry = ModelRegistry::with_builtins(&cfg.models);
    let (model, pseudo) = pseudo_label_loop(
        &masked,
        &labeled,
        &pool,
        &cfg.ensemble,
        &cfg.features,
        &registry,
        &cfg.pseudo,
        ensemble_seed(cfg),
    )?;
    let holdout_labels: Vec<f64> = holdout_rows
        .iter()
        .map(|&r| ds.posts[r].label.expect("held-out rows are labeled"))
        .collect();
    let holdout_predictions = model.predict(&masked, &holdout_rows)?;
    let holdout = if holdout_rows.len() >= 2 {
        Some(Metrics::compute_lenient(&holdout_labels, &holdout_predictions)?)
    } else {
        None
    };
    Ok(ExperimentResult {
        model,
        pseudo,
        train_rows,
        holdout_rows,
        holdout_labels,
        holdout_predictions,
        holdout,
    })
}
