use serde::{Deserialize, Serialize};

use super::{
    cross_modal_similarity, fit_svd_embeddings, temporal_features, text_stats, Entity, PcaModel,
    ScalerModel, SvdModel, TEMPORAL_NAMES, TEXT_STAT_NAMES,
};
use crate::artifact::{Reader, Writer};
use crate::dataset::Dataset;
use crate::domain::{concat_blocks, FeatureMatrix, Post};
use crate::error::{Error, Result};
use crate::ingest::{EmbeddingTable, ImputationPolicy, ImputationStats};
use crate::linalg::Mat;
use crate::rng::RngSeed;

/// Which blocks to build and how. `temporal` and `geo` are the two halves of
/// the spatial block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub visual: bool,
    pub textual: bool,
    pub temporal: bool,
    pub geo: bool,
    pub user: bool,
    pub cross: bool,
    pub text_stats: bool,
    pub user_svd_rank: usize,
    pub location_svd_rank: usize,
    pub svd_iterations: usize,
    /// Number of principal components for the visual block; 0 keeps raw columns.
    pub pca_visual: usize,
    pub pca_textual: usize,
    pub imputation: ImputationPolicy,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            visual: true,
            textual: true,
            temporal: true,
            geo: true,
            user: true,
            cross: true,
            text_stats: true,
            user_svd_rank: 16,
            location_svd_rank: 8,
            svd_iterations: 6,
            pca_visual: 0,
            pca_textual: 0,
            imputation: ImputationPolicy::default(),
        }
    }
}

/// Preprocessing state fitted on training rows: imputation fills, SVD
/// embeddings, optional PCA and the final standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePipeline {
    pub config: FeatureConfig,
    pub imputation: ImputationStats,
    pub user_svd: Option<SvdModel>,
    pub location_svd: Option<SvdModel>,
    pub pca_visual: Option<PcaModel>,
    pub pca_textual: Option<PcaModel>,
    pub scaler: ScalerModel,
    pub col_names: Vec<String>,
    dims: [usize; 3],
}

const MAGIC: &[u8; 4] = b"HFFP";

fn table_dim(t: &Option<EmbeddingTable>) -> usize {
    t.as_ref().map_or(0, |t| t.dim)
}

fn table_block(t: &EmbeddingTable, rows: &[usize]) -> Mat {
    let mut m = Mat::zeros(rows.len(), t.dim);
    for (i, &r) in rows.iter().enumerate() {
        m.data[i * t.dim..(i + 1) * t.dim].copy_from_slice(t.row(r));
    }
    m
}

fn need<'a>(t: &'a Option<EmbeddingTable>, what: &str) -> Result<&'a EmbeddingTable> {
    t.as_ref()
        .ok_or_else(|| Error::Input(format!("{what} block enabled but no `{what}` embedding table was loaded")))
}

impl FeaturePipeline {
    pub fn fit(ds: &Dataset, train_rows: &[usize], config: &FeatureConfig, seed: RngSeed) -> Result<Self> {
        if train_rows.is_empty() {
            return Err(Error::Degenerate("no training rows for the feature pipeline".into()));
        }
        let mut mask = vec![false; ds.len()];
        for &r in train_rows {
            mask[r] = true;
        }
        let imputation = ImputationStats::fit(&ds.posts, &mask, &config.imputation)?;
        let train_posts: Vec<Post> = train_rows.iter().map(|&r| ds.posts[r].clone()).collect();

        let user_svd = if config.user && config.user_svd_rank > 0 {
            Some(fit_svd_embeddings(
                &train_posts,
                Entity::User,
                config.user_svd_rank,
                config.svd_iterations,
                seed.derive(&[1]),
            )?)
        } else {
            None
        };
        let location_svd = if config.geo && config.location_svd_rank > 0 {
            Some(fit_svd_embeddings(
                &train_posts,
                Entity::Location,
                config.location_svd_rank,
                config.svd_iterations,
                seed.derive(&[2]),
            )?)
        } else {
            None
        };
        let pca_visual = if config.visual && config.pca_visual > 0 {
            let t = need(&ds.visual, "visual")?;
            Some(PcaModel::fit(&table_block(t, train_rows), config.pca_visual, seed.derive(&[3]))?)
        } else {
            None
        };
        let pca_textual = if config.textual && config.pca_textual > 0 {
            let t = need(&ds.text, "text")?;
            Some(PcaModel::fit(&table_block(t, train_rows), config.pca_textual, seed.derive(&[4]))?)
        } else {
            None
        };
        let mut p = FeaturePipeline {
            config: config.clone(),
            imputation,
            user_svd,
            location_svd,
            pca_visual,
            pca_textual,
            scaler: ScalerModel {
                means: vec![],
                stds: vec![],
            },
            col_names: vec![],
            dims: [table_dim(&ds.visual), table_dim(&ds.text), table_dim(&ds.glove)],
        };
        let raw = p.raw_features(ds, train_rows)?;
        p.scaler = ScalerModel::fit(raw.data(), raw.rows(), raw.cols());
        p.col_names = raw.col_names().to_vec();
        Ok(p)
    }

    pub fn width(&self) -> usize {
        self.col_names.len()
    }

    /// Unscaled concatenation of the configured blocks for `rows`.
    pub fn raw_features(&self, ds: &Dataset, rows: &[usize]) -> Result<FeatureMatrix> {
        let dims = [table_dim(&ds.visual), table_dim(&ds.text), table_dim(&ds.glove)];
        if dims != self.dims {
            return Err(Error::Shape(format!(
                "embedding dims {dims:?} differ from those the pipeline was fitted on {:?}",
                self.dims
            )));
        }
        let cfg = &self.config;
        let ids: Vec<String> = rows.iter().map(|&r| ds.posts[r].post_id.clone()).collect();
        let subset: Vec<Post> = rows.iter().map(|&r| ds.posts[r].clone()).collect();
        let imputed = self.imputation.apply(&subset);
        let mut blocks = Vec::new();

        if cfg.visual {
            let t = need(&ds.visual, "visual")?;
            let m = table_block(t, rows);
            let (m, stem) = match &self.pca_visual {
                Some(p) => (p.apply(&m)?, "pc"),
                None => (m, "clip"),
            };
            let names = (0..m.cols).map(|j| format!("visual.{stem}_{j:03}")).collect();
            blocks.push(FeatureMatrix::new("visual", ids.clone(), names, m.data)?);
        }

        if cfg.textual {
            let mut parts: Vec<(Vec<String>, Mat)> = Vec::new();
            if let Some(t) = &ds.text {
                let m = table_block(t, rows);
                let (m, stem) = match &self.pca_textual {
                    Some(p) => (p.apply(&m)?, "pc"),
                    None => (m, "clip"),
                };
                parts.push(((0..m.cols).map(|j| format!("textual.{stem}_{j:03}")).collect(), m));
            } else if cfg.pca_textual > 0 {
                need(&ds.text, "text")?;
            }
            if let Some(g) = &ds.glove {
                parts.push((
                    (0..g.dim).map(|j| format!("textual.glove_{j:03}")).collect(),
                    pooled_tag_vectors(g, &subset),
                ));
            }
            if cfg.text_stats {
                let mut m = Mat::zeros(rows.len(), TEXT_STAT_NAMES.len());
                for (i, p) in subset.iter().enumerate() {
                    m.data[i * 7..(i + 1) * 7].copy_from_slice(&text_stats(&p.caption, &p.tags));
                }
                parts.push((TEXT_STAT_NAMES.iter().map(|n| format!("textual.{n}")).collect(), m));
            }
            if !parts.is_empty() {
                blocks.push(hstack("textual", &ids, parts)?);
            }
        }

        if cfg.temporal || cfg.geo {
            let mut parts = Vec::new();
            if cfg.temporal {
                let mut m = Mat::zeros(rows.len(), TEMPORAL_NAMES.len());
                for (i, p) in subset.iter().enumerate() {
                    m.data[i * 7..(i + 1) * 7].copy_from_slice(&temporal_features(p.timestamp));
                }
                parts.push((TEMPORAL_NAMES.iter().map(|n| format!("spatial.{n}")).collect(), m));
            }
            if cfg.geo {
                let mut m = Mat::zeros(rows.len(), 4);
                for (i, p) in imputed.posts.iter().enumerate() {
                    m[(i, 0)] = p.latitude.unwrap_or(0.0);
                    m[(i, 1)] = p.longitude.unwrap_or(0.0);
                    m[(i, 2)] = p.geo_accuracy.unwrap_or(0) as f64;
                    m[(i, 3)] = f64::from(u8::from(imputed.geo_missing[i]));
                }
                parts.push((
                    ["latitude", "longitude", "geo_accuracy", "geo_missing"]
                        .iter()
                        .map(|n| format!("spatial.{n}"))
                        .collect(),
                    m,
                ));
                if let Some(svd) = &self.location_svd {
                    // cells come from the original coordinates; imputed (0, 0) is not a place
                    let keys: Vec<Option<String>> = subset.iter().map(|p| Entity::Location.key(p)).collect();
                    parts.push(svd_part("spatial", "loc", svd, &keys));
                }
            }
            blocks.push(hstack("spatial", &ids, parts)?);
        }

        if cfg.user {
            let mut m = Mat::zeros(rows.len(), 5);
            for (i, p) in imputed.posts.iter().enumerate() {
                let followers = p.followers.unwrap_or(0) as f64;
                m[(i, 0)] = followers;
                m[(i, 1)] = p.following.unwrap_or(0) as f64;
                m[(i, 2)] = p.user_post_count.unwrap_or(0) as f64;
                m[(i, 3)] = f64::from(u8::from(p.is_pro.unwrap_or(false)));
                m[(i, 4)] = followers.ln_1p();
            }
            let mut parts = vec![(
                ["followers", "following", "user_post_count", "is_pro", "log1p_followers"]
                    .iter()
                    .map(|n| format!("user.{n}"))
                    .collect(),
                m,
            )];
            if let Some(svd) = &self.user_svd {
                let keys: Vec<Option<String>> = subset.iter().map(|p| Entity::User.key(p)).collect();
                parts.push(svd_part("user", "user", svd, &keys));
            }
            blocks.push(hstack("user", &ids, parts)?);
        }

        if cfg.cross {
            let v = need(&ds.visual, "visual")?;
            let t = need(&ds.text, "text")?;
            let data = rows
                .iter()
                .map(|&r| cross_modal_similarity(v.row(r), t.row(r)))
                .collect::<Result<Vec<f64>>>()?;
            blocks.push(FeatureMatrix::new("cross", ids.clone(), vec!["cross.s_cross".into()], data)?);
        }

        if blocks.is_empty() {
            return Err(Error::Input("every feature block is disabled".into()));
        }
        concat_blocks(&blocks)
    }

    /// Standardized features for `rows`.
    pub fn transform(&self, ds: &Dataset, rows: &[usize]) -> Result<FeatureMatrix> {
        let raw = self.raw_features(ds, rows)?;
        if raw.col_names() != self.col_names.as_slice() {
            return Err(Error::Shape("feature columns differ from the fitted pipeline".into()));
        }
        let scaled = self.scaler.apply(raw.data());
        raw.with_data(scaled)
    }

    pub fn write(&self, w: &mut Writer) {
        w.section("config", |w| {
            w.str(&serde_json::to_string(&self.config).expect("config serializes"))
        });
        w.section("dims", |w| {
            for d in self.dims {
                w.usize(d);
            }
        });
        w.section("impute", |w| self.imputation.write(w));
        for (tag, m) in [("user_svd", &self.user_svd), ("location_svd", &self.location_svd)] {
            w.section(tag, |w| {
                w.bool(m.is_some());
                if let Some(m) = m {
                    m.write(w);
                }
            });
        }
        for (tag, m) in [("pca_visual", &self.pca_visual), ("pca_textual", &self.pca_textual)] {
            w.section(tag, |w| {
                w.bool(m.is_some());
                if let Some(m) = m {
                    m.write(w);
                }
            });
        }
        w.section("scaler", |w| self.scaler.write(w));
        w.section("columns", |w| w.strs(&self.col_names));
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        let mut s = r.section("config")?;
        let text = s.str()?;
        let config: FeatureConfig =
            serde_json::from_str(&text).map_err(|e| s.err(format!("bad feature config: {e}")))?;
        let mut s = r.section("dims")?;
        let dims = [s.usize()?, s.usize()?, s.usize()?];
        let imputation = ImputationStats::read(&mut r.section("impute")?)?;
        let mut opt_svd = |tag: &str| -> Result<Option<SvdModel>> {
            let mut s = r.section(tag)?;
            if s.bool()? {
                Ok(Some(SvdModel::read(&mut s)?))
            } else {
                Ok(None)
            }
        };
        let user_svd = opt_svd("user_svd")?;
        let location_svd = opt_svd("location_svd")?;
        let mut opt_pca = |tag: &str| -> Result<Option<PcaModel>> {
            let mut s = r.section(tag)?;
            if s.bool()? {
                Ok(Some(PcaModel::read(&mut s)?))
            } else {
                Ok(None)
            }
        };
        let pca_visual = opt_pca("pca_visual")?;
        let pca_textual = opt_pca("pca_textual")?;
        let scaler = ScalerModel::read(&mut r.section("scaler")?)?;
        let col_names = r.section("columns")?.strs()?;
        Ok(FeaturePipeline {
            config,
            imputation,
            user_svd,
            location_svd,
            pca_visual,
            pca_textual,
            scaler,
            col_names,
            dims,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(MAGIC);
        self.write(&mut w);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::with_header(bytes, MAGIC)?;
        let p = Self::read(&mut r)?;
        r.finish()?;
        Ok(p)
    }
}

fn pooled_tag_vectors(glove: &EmbeddingTable, posts: &[Post]) -> Mat {
    let index = glove.index();
    let mut m = Mat::zeros(posts.len(), glove.dim);
    for (i, p) in posts.iter().enumerate() {
        let hits: Vec<usize> = p.tags.iter().filter_map(|t| index.get(t.as_str()).copied()).collect();
        if hits.is_empty() {
            continue;
        }
        let row = &mut m.data[i * glove.dim..(i + 1) * glove.dim];
        for h in &hits {
            for (o, v) in row.iter_mut().zip(glove.row(*h)) {
                *o += v;
            }
        }
        let n = hits.len() as f64;
        row.iter_mut().for_each(|v| *v /= n);
    }
    m
}

fn svd_part(block: &str, stem: &str, svd: &SvdModel, keys: &[Option<String>]) -> (Vec<String>, Mat) {
    let (data, width) = svd.embed(keys);
    let mut names: Vec<String> = (0..svd.k).map(|j| format!("{block}.{stem}_svd_{j:03}")).collect();
    names.push(format!("{block}.{stem}_unseen"));
    (names, Mat::from_vec(keys.len(), width, data))
}

fn hstack(block: &str, ids: &[String], parts: Vec<(Vec<String>, Mat)>) -> Result<FeatureMatrix> {
    let rows = ids.len();
    let width: usize = parts.iter().map(|(_, m)| m.cols).sum();
    let mut data = Vec::with_capacity(rows * width);
    for r in 0..rows {
        for (_, m) in &parts {
            data.extend_from_slice(m.row(r));
        }
    }
    let names = parts.into_iter().flat_map(|(n, _)| n).collect();
    FeatureMatrix::new(block, ids.to_vec(), names, data)
}

/// Fit the pipeline on every row of `ds` and return the unscaled features.
pub fn build_features(ds: &Dataset, config: &FeatureConfig, seed: RngSeed) -> Result<FeatureMatrix> {
    let rows: Vec<usize> = (0..ds.len()).collect();
    FeaturePipeline::fit(ds, &rows, config, seed)?.raw_features(ds, &rows)
}
