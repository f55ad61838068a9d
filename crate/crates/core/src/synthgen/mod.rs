//! Seeded generator of popularity datasets with planted multimodal signal.
//!
//! Each post's latent score is a weighted sum of standardized components: the
//! author's quality, one visual and one textual coordinate, a time-of-day
//! curve and the agreement between its visual and textual embeddings. Labels
//! are a convex monotone transform of the latent score plus Gaussian noise,
//! so they are positive and right-skewed.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{GLOVE_TAG, TEXT_TAG, VISUAL_TAG};
use crate::domain::Post;
use crate::error::{Error, Result};
use crate::eval::spearman;
use crate::ingest::{write_embeddings, write_posts, EmbeddingTable};
use crate::rng::{Rng, RngSeed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_posts: usize,
    pub n_users: usize,
    pub n_locations: usize,
    pub visual_dim: usize,
    pub text_dim: usize,
    pub glove_dim: usize,
    pub tag_vocab: usize,
    pub user_effect: f64,
    pub visual_effect: f64,
    pub text_effect: f64,
    pub temporal_effect: f64,
    pub coherence_effect: f64,
    pub noise_std: f64,
    pub label_shift: f64,
    pub label_scale: f64,
    pub labeled_fraction: f64,
    pub geo_missing_rate: f64,
    pub followers_missing_rate: f64,
    /// Share of labeled posts whose label is shifted up by `outlier_shift`.
    pub outlier_fraction: f64,
    pub outlier_shift: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_posts: 10_000,
            n_users: 400,
            n_locations: 60,
            visual_dim: 64,
            text_dim: 64,
            glove_dim: 16,
            tag_vocab: 120,
            user_effect: 1.0,
            visual_effect: 0.6,
            text_effect: 0.4,
            temporal_effect: 0.3,
            coherence_effect: 0.3,
            noise_std: 0.5,
            label_shift: 6.5,
            label_scale: 2.2,
            labeled_fraction: 0.8,
            geo_missing_rate: 0.3,
            followers_missing_rate: 0.02,
            outlier_fraction: 0.0,
            outlier_shift: 15.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("synth.n_posts", self.n_posts),
            ("synth.n_users", self.n_users),
            ("synth.n_locations", self.n_locations),
            ("synth.visual_dim", self.visual_dim),
            ("synth.text_dim", self.text_dim),
            ("synth.glove_dim", self.glove_dim),
            ("synth.tag_vocab", self.tag_vocab),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction <= 1.0) {
            return Err(Error::config(
                "synth.labeled_fraction",
                format!("must lie in (0, 1], got {}", self.labeled_fraction),
            ));
        }
        for (field, v) in [
            ("synth.geo_missing_rate", self.geo_missing_rate),
            ("synth.followers_missing_rate", self.followers_missing_rate),
            ("synth.outlier_fraction", self.outlier_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(field, format!("must lie in [0, 1], got {v}")));
            }
        }
        let reals = [
            ("synth.user_effect", self.user_effect),
            ("synth.visual_effect", self.visual_effect),
            ("synth.text_effect", self.text_effect),
            ("synth.temporal_effect", self.temporal_effect),
            ("synth.coherence_effect", self.coherence_effect),
            ("synth.label_shift", self.label_shift),
            ("synth.label_scale", self.label_scale),
            ("synth.outlier_shift", self.outlier_shift),
        ];
        for (field, v) in reals {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("synth.noise_std", "must be finite and nonnegative"));
        }
        if self.label_scale <= 0.0 {
            return Err(Error::config("synth.label_scale", "must be positive"));
        }
        Ok(())
    }
}

/// Ground truth kept beside the generated files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// Noiseless latent score per post, in post order.
    pub latent: Vec<f64>,
    pub user_quality: BTreeMap<String, f64>,
    /// Feature columns that carry planted signal, per block.
    pub planted: BTreeMap<String, Vec<String>>,
    /// Rank correlation between latent scores and labels over labeled posts.
    pub oracle_src_bound: f64,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub posts: Vec<Post>,
    pub visual: EmbeddingTable,
    pub text: EmbeddingTable,
    pub glove: EmbeddingTable,
    pub truth: SynthTruth,
}

pub const POSTS_FILE: &str = "posts.jsonl";
pub const VISUAL_FILE: &str = "visual_clip.pfe";
pub const TEXT_FILE: &str = "text_clip.pfe";
pub const GLOVE_FILE: &str = "tags_glove.pfe";
pub const TRUTH_FILE: &str = "truth.json";

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `softplus(shift + scale · u)`.
pub fn label_transform(u: f64, cfg: &SynthConfig) -> f64 {
    softplus(cfg.label_shift + cfg.label_scale * u)
}

const WORDS: [&str; 24] = [
    "sunset", "city", "friends", "coffee", "beach", "night", "street", "morning", "light", "travel",
    "music", "food", "river", "mountain", "old", "new", "blue", "green", "walk", "home", "art",
    "rain", "summer", "winter",
];

const BASE_TIMESTAMP: i64 = 1_672_531_200; // 2023-01-01T00:00:00Z

struct User {
    id: String,
    quality: f64,
    followers: u64,
    following: u64,
    post_count: u64,
    is_pro: bool,
    home: (f64, f64),
    topic: usize,
}

fn fill_normal(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.normal() * scale).collect()
}

/// Generate a dataset. Identical `(cfg, seed)` gives bit-identical output.
pub fn generate(cfg: &SynthConfig, seed: RngSeed) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = seed.derive(&[0x7379_6e74]).rng();
    let n = cfg.n_posts;

    let centers: Vec<(f64, f64)> = (0..cfg.n_locations)
        .map(|_| (rng.uniform_range(-60.0, 60.0), rng.uniform_range(-170.0, 170.0)))
        .collect();
    let topics = cfg.tag_vocab.div_ceil(8).max(1);
    let users: Vec<User> = (0..cfg.n_users)
        .map(|i| {
            let quality = rng.normal();
            User {
                id: format!("u{i:05}"),
                quality,
                followers: (5.0 + 1.5 * quality).exp().round() as u64,
                following: (5.0 + 0.8 * rng.normal()).exp().round() as u64,
                post_count: (4.0 + rng.normal()).exp().round() as u64 + 1,
                is_pro: quality + rng.normal() > 1.0,
                home: centers[rng.below(centers.len())],
                topic: rng.below(topics),
            }
        })
        .collect();

    let glove_data = fill_normal(&mut rng, cfg.tag_vocab * cfg.glove_dim, 1.0 / (cfg.glove_dim as f64).sqrt());
    let tag_names: Vec<String> = (0..cfg.tag_vocab).map(|t| format!("tag{t:03}")).collect();

    let effects = [
        cfg.user_effect,
        cfg.visual_effect,
        cfg.text_effect,
        cfg.temporal_effect,
        cfg.coherence_effect,
    ];
    let norm = effects.iter().map(|e| e * e).sum::<f64>().sqrt();
    let (vd, td) = (cfg.visual_dim, cfg.text_dim);
    let shared_dim = vd.min(td).saturating_sub(1);

    let mut posts = Vec::with_capacity(n);
    let mut visual = Vec::with_capacity(n * vd);
    let mut text = Vec::with_capacity(n * td);
    let mut latent = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for p in 0..n {
        let user = &users[if p < cfg.n_users { p } else { rng.below(cfg.n_users) }];
        let s_visual = rng.normal();
        let s_text = rng.normal();
        let coherence = rng.uniform();
        let secs = rng.below(365 * 86_400) as i64;
        let hour = (secs % 86_400) as f64 / 3600.0;
        let temporal = std::f64::consts::SQRT_2 * (TAU * (hour - 20.0) / 24.0).cos();
        // uniform(0,1) has variance 1/12
        let coherence_z = (coherence - 0.5) * 12f64.sqrt();

        let direction = fill_normal(&mut rng, shared_dim, 1.0);
        let (a, b) = (coherence.sqrt(), (1.0 - coherence).sqrt());
        visual.push(s_visual);
        for j in 1..vd {
            let shared = direction.get(j - 1).copied().unwrap_or(0.0);
            visual.push(a * shared + b * rng.normal());
        }
        text.push(s_text);
        for j in 1..td {
            let shared = direction.get(j - 1).copied().unwrap_or(0.0);
            text.push(a * shared + b * rng.normal());
        }

        let z = if norm > 0.0 {
            (cfg.user_effect * user.quality
                + cfg.visual_effect * s_visual
                + cfg.text_effect * s_text
                + cfg.temporal_effect * temporal
                + cfg.coherence_effect * coherence_z)
                / norm
        } else {
            0.0
        };
        latent.push(z);
        let u = (z + cfg.noise_std * rng.normal()) / (1.0 + cfg.noise_std * cfg.noise_std).sqrt();
        labels.push(label_transform(u, cfg));

        let n_tags = 1 + rng.below(6);
        let tags: Vec<String> = (0..n_tags)
            .map(|_| {
                let t = if rng.uniform() < 0.7 {
                    (user.topic * 8 + rng.below(8)).min(cfg.tag_vocab - 1)
                } else {
                    rng.below(cfg.tag_vocab)
                };
                tag_names[t].clone()
            })
            .collect();
        let n_words = 3 + rng.below(12);
        let mut caption: Vec<String> = (0..n_words).map(|_| WORDS[rng.below(WORDS.len())].to_string()).collect();
        if rng.uniform() < 0.3 {
            caption.push(format!("#{}", tags[0]));
        }
        let geo = rng.uniform() >= cfg.geo_missing_rate;
        let (lat, lon) = (
            (user.home.0 + rng.normal() * 0.02).clamp(-90.0, 90.0),
            (user.home.1 + rng.normal() * 0.02).clamp(-180.0, 180.0),
        );
        let followers_known = rng.uniform() >= cfg.followers_missing_rate;
        posts.push(Post {
            post_id: format!("p{p:06}"),
            user_id: user.id.clone(),
            timestamp: BASE_TIMESTAMP + secs,
            latitude: geo.then_some(lat),
            longitude: geo.then_some(lon),
            geo_accuracy: geo.then(|| 10 + rng.below(7) as i64),
            caption: caption.join(" "),
            tags,
            followers: followers_known.then_some(user.followers),
            following: Some(user.following),
            user_post_count: Some(user.post_count),
            is_pro: Some(user.is_pro),
            label: None,
        });
    }

    let order = rng.permutation(n);
    let n_labeled = (cfg.labeled_fraction * n as f64).floor() as usize;
    let mut labeled: Vec<usize> = order[..n_labeled].to_vec();
    labeled.sort_unstable();
    let n_outliers = (cfg.outlier_fraction * n_labeled as f64).round() as usize;
    let outlier_pick = rng.permutation(n_labeled);
    for &i in &outlier_pick[..n_outliers] {
        labels[labeled[i]] += cfg.outlier_shift;
    }
    for &r in &labeled {
        posts[r].label = Some(labels[r]);
    }

    let lat_l: Vec<f64> = labeled.iter().map(|&r| latent[r]).collect();
    let lab_l: Vec<f64> = labeled.iter().map(|&r| labels[r]).collect();
    let oracle_src_bound = spearman(&lat_l, &lab_l).unwrap_or(0.0);

    let ids: Vec<String> = posts.iter().map(|p| p.post_id.clone()).collect();
    let mut planted = BTreeMap::new();
    planted.insert("visual".to_string(), vec!["visual.clip_000".to_string()]);
    planted.insert("textual".to_string(), vec!["textual.clip_000".to_string()]);
    planted.insert(
        "user".to_string(),
        vec!["user.followers".to_string(), "user.log1p_followers".to_string()],
    );
    planted.insert("spatial".to_string(), vec!["spatial.hour_sin".to_string(), "spatial.hour_cos".to_string()]);
    planted.insert("cross".to_string(), vec!["cross.s_cross".to_string()]);
    Ok(SynthData {
        visual: EmbeddingTable::new(VISUAL_TAG, ids.clone(), vd, visual)?,
        text: EmbeddingTable::new(TEXT_TAG, ids, td, text)?,
        glove: EmbeddingTable::new(GLOVE_TAG, tag_names, cfg.glove_dim, glove_data)?,
        truth: SynthTruth {
            latent,
            user_quality: users.iter().map(|u| (u.id.clone(), u.quality)).collect(),
            planted,
            oracle_src_bound,
        },
        posts,
    })
}

/// SRC between noiseless latent scores and labels, over posts that carry a label.
pub fn oracle_src_bound(truth: &SynthTruth, posts: &[Post]) -> Result<f64> {
    if truth.latent.len() != posts.len() {
        return Err(Error::Shape("truth and posts differ in length".into()));
    }
    let (a, b): (Vec<f64>, Vec<f64>) = posts
        .iter()
        .zip(&truth.latent)
        .filter_map(|(p, &z)| p.label.map(|y| (z, y)))
        .unzip();
    spearman(&a, &b)
}

impl SynthData {
    /// Write posts, the three embedding tables and the truth sidecar into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_posts(&dir.join(POSTS_FILE), &self.posts)?;
        write_embeddings(&dir.join(VISUAL_FILE), &self.visual)?;
        write_embeddings(&dir.join(TEXT_FILE), &self.text)?;
        write_embeddings(&dir.join(GLOVE_FILE), &self.glove)?;
        let truth = serde_json::to_string_pretty(&self.truth).expect("truth serializes");
        let path = dir.join(TRUTH_FILE);
        std::fs::write(&path, truth + "\n").map_err(|e| Error::io(path, e))
    }
}
