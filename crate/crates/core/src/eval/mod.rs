//! Metrics, permutation importance, ablations and distribution export.

mod ablation;
mod distribution;
mod importance;
mod metrics;

pub use ablation::{ablation_csv, ablation_run, AblationRow, Toggle};
pub use distribution::{
    density, density_csv, histogram, histogram_csv, modal_bin_center, silverman_bandwidth, DensityRow,
    HistogramRow, DENSITY_POINTS,
};
pub use importance::{permutation_importance, FeatureImportance, ImportanceReport};
pub use metrics::{average_ranks, mae, spearman, Metrics};
