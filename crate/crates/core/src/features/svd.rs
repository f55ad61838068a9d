//! Latent user and location embeddings from a truncated SVD of entity × tag
//! co-occurrence counts.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::artifact::{Reader, Writer};
use crate::domain::Post;
use crate::error::{Error, Result};
use crate::linalg::{truncated_svd, Mat, SvdOptions};
use crate::rng::RngSeed;

/// Grid resolution, in degrees, of location cells.
pub const LOCATION_CELL_DEGREES: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Entity {
    User,
    Location,
}

impl Entity {
    pub fn name(self) -> &'static str {
        match self {
            Entity::User => "user",
            Entity::Location => "location",
        }
    }

    /// The entity a post belongs to, if any. Posts without coordinates have
    /// no location cell.
    pub fn key(self, post: &Post) -> Option<String> {
        match self {
            Entity::User => Some(post.user_id.clone()),
            Entity::Location => match (post.latitude, post.longitude) {
                (Some(lat), Some(lon)) => Some(location_cell(lat, lon)),
                _ => None,
            },
        }
    }
}

pub fn location_cell(lat: f64, lon: f64) -> String {
    let scale = 1.0 / LOCATION_CELL_DEGREES;
    format!("{}:{}", (lat * scale).floor() as i64, (lon * scale).floor() as i64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvdModel {
    /// m × k, one row per entity.
    pub left_factors: Mat,
    pub singular_values: Vec<f64>,
    /// n × k, one row per vocabulary term.
    pub right_factors: Mat,
    pub k: usize,
    pub entities: Vec<String>,
    pub vocab: Vec<String>,
    pub fitted_on: String,
    row_index: HashMap<String, usize>,
}

impl SvdModel {
    /// Factorize an explicit m × n matrix whose rows are `entities`.
    pub fn fit_matrix(
        matrix: &Mat,
        entities: Vec<String>,
        vocab: Vec<String>,
        k: usize,
        iterations: usize,
        seed: RngSeed,
        fitted_on: &str,
    ) -> Result<Self> {
        if matrix.rows == 0 || matrix.cols == 0 {
            return Err(Error::Degenerate(format!(
                "empty {fitted_on} interaction matrix ({} x {})",
                matrix.rows, matrix.cols
            )));
        }
        assert_eq!(entities.len(), matrix.rows);
        assert_eq!(vocab.len(), matrix.cols);
        let svd = truncated_svd(
            matrix,
            k,
            SvdOptions {
                iterations,
                seed,
                ..SvdOptions::default()
            },
        )?;
        Ok(Self::from_parts(svd.u, svd.sigma, svd.v, entities, vocab, fitted_on))
    }

    fn from_parts(
        left_factors: Mat,
        singular_values: Vec<f64>,
        right_factors: Mat,
        entities: Vec<String>,
        vocab: Vec<String>,
        fitted_on: &str,
    ) -> Self {
        let row_index = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        SvdModel {
            k: singular_values.len(),
            left_factors,
            singular_values,
            right_factors,
            entities,
            vocab,
            fitted_on: fitted_on.to_string(),
            row_index,
        }
    }

    /// U_k · Σ_k^{1/2} row of a seen entity.
    pub fn embedding(&self, entity: &str) -> Option<Vec<f64>> {
        let r = *self.row_index.get(entity)?;
        Some(
            (0..self.k)
                .map(|j| self.left_factors[(r, j)] * self.singular_values[j].sqrt())
                .collect(),
        )
    }

    /// k embedding columns plus an unseen flag; unseen or absent keys embed as zeros.
    pub fn embed(&self, keys: &[Option<String>]) -> (Vec<f64>, usize) {
        let width = self.k + 1;
        let mut out = Vec::with_capacity(keys.len() * width);
        for key in keys {
            match key.as_deref().and_then(|k| self.embedding(k)) {
                Some(e) => {
                    out.extend(e);
                    out.push(0.0);
                }
                None => {
                    out.extend(std::iter::repeat_n(0.0, self.k));
                    out.push(1.0);
                }
            }
        }
        (out, width)
    }

    pub fn reconstruct(&self) -> Mat {
        let mut us = self.left_factors.clone();
        for r in 0..us.rows {
            for j in 0..self.k {
                us[(r, j)] *= self.singular_values[j];
            }
        }
        us.matmul(&self.right_factors.transpose())
    }

    pub fn write(&self, w: &mut Writer) {
        w.str(&self.fitted_on);
        w.strs(&self.entities);
        w.strs(&self.vocab);
        w.f64s(&self.singular_values);
        w.f64s(&self.left_factors.data);
        w.f64s(&self.right_factors.data);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        let fitted_on = r.str()?;
        let entities = r.strs()?;
        let vocab = r.strs()?;
        let sigma = r.f64s()?;
        let k = sigma.len();
        let u = r.f64s()?;
        let v = r.f64s()?;
        if u.len() != entities.len() * k || v.len() != vocab.len() * k {
            return Err(r.err("svd factor shapes do not match entity/vocab counts"));
        }
        Ok(Self::from_parts(
            Mat::from_vec(entities.len(), k, u),
            sigma,
            Mat::from_vec(vocab.len(), k, v),
            entities,
            vocab,
            &fitted_on,
        ))
    }
}

/// Entity × tag matrix of log(1 + count) over `posts`, with sorted entity
/// and vocabulary orders.
pub fn interaction_matrix<'a>(
    posts: impl Iterator<Item = &'a Post> + Clone,
    entity: Entity,
) -> (Mat, Vec<String>, Vec<String>) {
    let vocab: Vec<String> = posts
        .clone()
        .flat_map(|p| p.tags.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let vocab_index: HashMap<&str, usize> =
        vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut counts: BTreeMap<String, BTreeMap<usize, u64>> = BTreeMap::new();
    for p in posts {
        let Some(key) = entity.key(p) else { continue };
        let row = counts.entry(key).or_default();
        for t in &p.tags {
            *row.entry(vocab_index[t.as_str()]).or_default() += 1;
        }
    }
    let entities: Vec<String> = counts.keys().cloned().collect();
    let mut m = Mat::zeros(entities.len(), vocab.len());
    for (r, row) in counts.values().enumerate() {
        for (&c, &n) in row {
            m[(r, c)] = (n as f64).ln_1p();
        }
    }
    (m, entities, vocab)
}

/// Fit rank-`k` embeddings for users or location cells from training posts.
pub fn fit_svd_embeddings(
    posts: &[Post],
    entity: Entity,
    k: usize,
    iterations: usize,
    seed: RngSeed,
) -> Result<SvdModel> {
    let (m, entities, vocab) = interaction_matrix(posts.iter(), entity);
    SvdModel::fit_matrix(&m, entities, vocab, k, iterations, seed, entity.name())
}
