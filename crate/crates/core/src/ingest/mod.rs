//! Reading posts and precomputed embeddings, joining them by post id, and
//! filling missing metadata.

mod align;
mod impute;
mod pfe;
mod posts;

pub use align::{align, Aligned, JoinPolicy};
pub use impute::{
    impute, CategoricalRule, Imputed, ImputationPolicy, ImputationReport, ImputationStats,
    NumericRule,
};
pub use pfe::{read_embeddings, write_embeddings, EmbeddingTable, PFE_MAGIC};
pub use posts::{read_posts, write_posts};
