//! Feature construction: the five modality blocks and the fitted
//! preprocessing that turns posts into a standardized matrix.

mod cross;
mod iqr;
mod pca;
mod pipeline;
mod scaler;
mod svd;
mod temporal;
mod text;

pub use cross::cross_modal_similarity;
pub use iqr::{iqr_filter, quantile_sorted};
pub use pca::PcaModel;
pub use pipeline::{build_features, FeatureConfig, FeaturePipeline};
pub use scaler::{ScalerModel, STD_FLOOR};
pub use svd::{fit_svd_embeddings, interaction_matrix, location_cell, Entity, SvdModel};
pub use temporal::{civil_from_days, temporal_features, TEMPORAL_NAMES};
pub use text::{text_stats, TEXT_STAT_NAMES};
