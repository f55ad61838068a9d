//! Huber-loss regressors and the registry that selects them by name.
//!
//! Every member type implements [`RegressorFactory`] (fit + load) and
//! produces a boxed [`Regressor`]. The ensemble only ever sees those two
//! traits, so new member types plug in by registering a factory.

mod gbdt;
mod huber;
mod mlp;
mod ridge;

use std::any::Any;
use std::collections::BTreeMap;
use std::fmt::Debug;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use gbdt::{GbdtFactory, GbdtModel, GbdtParams, Tree};
pub use huber::{huber_loss, mean_huber, HuberParams};
pub use mlp::{MlpFactory, MlpModel, MlpParams};
pub use ridge::{RidgeFactory, RidgeModel, RidgeParams};

use crate::artifact::{Reader, Writer};
use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Borrowed training matrix with per-row labels and weights.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    /// Row-major `rows × cols`.
    pub x: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub y: &'a [f64],
    pub weights: &'a [f64],
    pub block_spans: &'a [(String, Range<usize>)],
}

impl<'a> TrainData<'a> {
    pub fn new(
        x: &'a [f64],
        cols: usize,
        y: &'a [f64],
        weights: &'a [f64],
        block_spans: &'a [(String, Range<usize>)],
    ) -> Result<Self> {
        let rows = y.len();
        if x.len() != rows * cols || weights.len() != rows {
            return Err(Error::Shape(format!(
                "training data: x has {} values, expected {rows} x {cols}; {} weights",
                x.len(),
                weights.len()
            )));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::Shape("empty training matrix".into()));
        }
        if x.iter().chain(y).chain(weights).any(|v| !v.is_finite()) {
            return Err(Error::Input("training data contains non-finite values".into()));
        }
        if weights.iter().any(|&w| w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Input("sample weights must be nonnegative with a positive sum".into()));
        }
        Ok(TrainData {
            x,
            rows,
            cols,
            y,
            weights,
            block_spans,
        })
    }

    pub fn row(&self, r: usize) -> &'a [f64] {
        &self.x[r * self.cols..(r + 1) * self.cols]
    }
}

/// A fitted model mapping a feature row to a score.
pub trait Regressor: Send + Sync + Debug {
    /// Registry name of the factory that produced this model.
    fn kind(&self) -> &'static str;
    fn feature_count(&self) -> usize;
    fn predict_row(&self, row: &[f64]) -> f64;
    fn write(&self, w: &mut Writer);
    fn as_any(&self) -> &dyn Any;

    fn predict(&self, x: &[f64], cols: usize) -> Result<Vec<f64>> {
        if cols != self.feature_count() {
            return Err(Error::Shape(format!(
                "{} model expects {} features, got {cols}",
                self.kind(),
                self.feature_count()
            )));
        }
        if cols == 0 {
            return Ok(Vec::new());
        }
        Ok(x.chunks_exact(cols).map(|r| self.predict_row(r)).collect())
    }
}

/// Fits and deserializes one kind of regressor.
pub trait RegressorFactory: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn fit(&self, data: &TrainData<'_>, huber: HuberParams, seed: RngSeed) -> Result<Box<dyn Regressor>>;
    fn load(&self, r: &mut Reader<'_>) -> Result<Box<dyn Regressor>>;
}

/// Hyperparameters of the built-in members.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub gbdt: GbdtParams,
    pub mlp: MlpParams,
    pub ridge: RidgeParams,
}

#[derive(Clone, Default)]
pub struct ModelRegistry {
    entries: BTreeMap<&'static str, Arc<dyn RegressorFactory>>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding `gbdt`, `mlp` and `ridge`.
    pub fn with_builtins(params: &ModelParams) -> Self {
        let mut r = Self::new();
        r.register(GbdtFactory(params.gbdt.clone()));
        r.register(MlpFactory(params.mlp.clone()));
        r.register(RidgeFactory(params.ridge.clone()));
        r
    }

    pub fn register<F: RegressorFactory + 'static>(&mut self, factory: F) {
        self.entries.insert(factory.name(), Arc::new(factory));
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn RegressorFactory>> {
        self.entries.get(name).cloned().ok_or_else(|| Error::Unknown {
            kind: "model",
            name: name.to_string(),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn list(&self) -> Vec<(&'static str, &'static str)> {
        self.entries.values().map(|f| (f.name(), f.description())).collect()
    }

    /// Write a model tagged with its kind.
    pub fn save(model: &dyn Regressor, w: &mut Writer) {
        w.str(model.kind());
        model.write(w);
    }

    pub fn load(&self, r: &mut Reader<'_>) -> Result<Box<dyn Regressor>> {
        let kind = r.str()?;
        self.get(&kind)?.load(r)
    }
}

impl std::fmt::Debug for ModelRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}
