//! One TOML file drives a whole run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::EnsembleConfig;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::ingest::JoinPolicy;
use crate::models::{ModelParams, ModelRegistry};
use crate::semisup::PseudoConfig;
use crate::synthgen::{SynthConfig, GLOVE_FILE, POSTS_FILE, TEXT_FILE, VISUAL_FILE};

/// Seed used when a config does not set one.
pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding the files below; relative names resolve against it.
    pub dir: PathBuf,
    pub posts: PathBuf,
    pub tables: Vec<PathBuf>,
    pub join: JoinPolicy,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: PathBuf::from("data"),
            posts: PathBuf::from(POSTS_FILE),
            tables: [VISUAL_FILE, TEXT_FILE, GLOVE_FILE].iter().map(PathBuf::from).collect(),
            join: JoinPolicy::default(),
        }
    }
}

impl DataConfig {
    pub fn posts_path(&self) -> PathBuf {
        self.dir.join(&self.posts)
    }

    pub fn table_paths(&self) -> Vec<PathBuf> {
        self.tables.iter().map(|t| self.dir.join(t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Share of labeled posts held out from all training.
    pub holdout_fraction: f64,
    pub bins: usize,
    pub importance_repeats: usize,
    pub top_k: usize,
    /// Variants `ablate` runs besides the full model.
    pub ablations: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            holdout_fraction: 0.2,
            bins: 20,
            importance_repeats: 3,
            top_k: 20,
            ablations: ["drop-visual", "drop-textual", "drop-user", "drop-geo", "no-pseudo", "no-iqr", "single-split"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub features: FeatureConfig,
    pub models: ModelParams,
    pub ensemble: EnsembleConfig,
    pub pseudo: PseudoConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            output: PathBuf::from("out"),
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            features: FeatureConfig::default(),
            models: ModelParams::default(),
            ensemble: EnsembleConfig::default(),
            pseudo: PseudoConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// `toml` reports `unknown field` / `invalid type` errors with a key path we can surface.
fn toml_field(e: &toml::de::Error) -> String {
    let msg = e.message();
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + len].to_string();
        }
    }
    "<file>".to_string()
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
            field: toml_field(&e),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read, parse and validate; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative_to(base);
        }
        Ok(cfg)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        if self.data.dir.is_relative() {
            self.data.dir = base.join(&self.data.dir);
        }
        if self.output.is_relative() {
            self.output = base.join(&self.output);
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 over the settings that influence results. Paths are left out
    /// so relocating a run does not change its identity.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        c.data.dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.pseudo.validate()?;
        let e = &self.ensemble;
        if !e.single_split && e.k < 2 {
            return Err(Error::config("ensemble.k", format!("must be at least 2, got {}", e.k)));
        }
        if e.members.is_empty() {
            return Err(Error::config("ensemble.members", "at least one member is required"));
        }
        let registry = ModelRegistry::with_builtins(&self.models);
        for m in &e.members {
            if registry.get(m).is_err() {
                return Err(Error::config(
                    "ensemble.members",
                    format!("unknown member `{m}`; known: {}", registry.names().join(", ")),
                ));
            }
        }
        if !(e.huber_delta > 0.0 && e.huber_delta.is_finite()) {
            return Err(Error::config("ensemble.huber_delta", "must be finite and positive"));
        }
        if !(e.iqr_multiplier > 0.0 && e.iqr_multiplier.is_finite()) {
            return Err(Error::config("ensemble.iqr_multiplier", "must be finite and positive"));
        }
        if !(e.validation_fraction > 0.0 && e.validation_fraction < 1.0) {
            return Err(Error::config("ensemble.validation_fraction", "must lie in (0, 1)"));
        }
        let g = &self.models.gbdt;
        if !(g.learning_rate > 0.0 && g.learning_rate <= 1.0) {
            return Err(Error::config("models.gbdt.learning_rate", "must lie in (0, 1]"));
        }
        if g.min_leaf == 0 {
            return Err(Error::config("models.gbdt.min_leaf", "must be at least 1"));
        }
        let m = &self.models.mlp;
        if m.batch_size < 2 {
            return Err(Error::config("models.mlp.batch_size", "must be at least 2"));
        }
        if !(m.learning_rate > 0.0 && m.learning_rate.is_finite()) {
            return Err(Error::config("models.mlp.learning_rate", "must be finite and positive"));
        }
        if !(self.models.ridge.l2 >= 0.0 && self.models.ridge.l2.is_finite()) {
            return Err(Error::config("models.ridge.l2", "must be finite and nonnegative"));
        }
        let v = &self.eval;
        if !(0.0..1.0).contains(&v.holdout_fraction) {
            return Err(Error::config("eval.holdout_fraction", "must lie in [0, 1)"));
        }
        if v.bins == 0 {
            return Err(Error::config("eval.bins", "must be at least 1"));
        }
        if v.importance_repeats == 0 {
            return Err(Error::config("eval.importance_repeats", "must be at least 1"));
        }
        for a in &v.ablations {
            a.parse::<crate::eval::Toggle>()
                .map_err(|_| Error::config("eval.ablations", format!("unknown variant `{a}`")))?;
        }
        Ok(())
    }
}
