//! Multimodal popularity regression.
//!
//! Posts and precomputed embedding tables are turned into five feature blocks
//! (visual, textual, spatial, user, cross-modal), regressed by Huber-loss
//! members (boosted trees, an attention MLP, ridge) that are combined with
//! per-fold simplex weights over K folds, and optionally refined by
//! confidence-thresholded pseudo-labeling.

pub mod artifact;
pub mod config;
pub mod dataset;
pub mod domain;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod ingest;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod semisup;
pub mod synthgen;

pub use config::RunConfig;
pub use dataset::Dataset;
pub use domain::{concat_blocks, Block, FeatureMatrix, Post};
pub use error::{Error, Result};
pub use rng::{Rng, RngSeed};
