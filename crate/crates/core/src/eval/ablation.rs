use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::experiment::run_experiment;

/// One component switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Toggle {
    DropVisual,
    DropTextual,
    DropUser,
    DropGeo,
    NoPseudo,
    NoIqr,
    SingleSplit,
}

impl Toggle {
    pub const ALL: [Toggle; 7] = [
        Toggle::DropVisual,
        Toggle::DropTextual,
        Toggle::DropUser,
        Toggle::DropGeo,
        Toggle::NoPseudo,
        Toggle::NoIqr,
        Toggle::SingleSplit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Toggle::DropVisual => "drop-visual",
            Toggle::DropTextual => "drop-textual",
            Toggle::DropUser => "drop-user",
            Toggle::DropGeo => "drop-geo",
            Toggle::NoPseudo => "no-pseudo",
            Toggle::NoIqr => "no-iqr",
            Toggle::SingleSplit => "single-split",
        }
    }

    /// The config with this component disabled. Dropping geo keeps the
    /// temporal half of the spatial block.
    pub fn apply(self, cfg: &RunConfig) -> RunConfig {
        let mut c = cfg.clone();
        match self {
            Toggle::DropVisual => c.features.visual = false,
            Toggle::DropTextual => c.features.textual = false,
            Toggle::DropUser => c.features.user = false,
            Toggle::DropGeo => c.features.geo = false,
            Toggle::NoPseudo => c.pseudo.enabled = false,
            Toggle::NoIqr => c.ensemble.iqr = false,
            Toggle::SingleSplit => c.ensemble.single_split = true,
        }
        c
    }
}

impl fmt::Display for Toggle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Toggle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Toggle::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "ablation",
                name: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub src: f64,
    pub mae: f64,
}

/// The full model followed by one run per toggle, scored on the held-out posts.
pub fn ablation_run(ds: &Dataset, cfg: &RunConfig, toggles: &[Toggle]) -> Result<Vec<AblationRow>> {
    let mut variants = vec![("full".to_string(), cfg.clone())];
    variants.extend(toggles.iter().map(|t| (t.name().to_string(), t.apply(cfg))));
    variants
        .into_iter()
        .map(|(variant, c)| {
            log::info!("ablation variant {variant}");
            let r = run_experiment(ds, &c)?;
            let m = r
                .holdout
                .ok_or_else(|| Error::config("eval.holdout_fraction", "ablation needs held-out posts"))?;
            Ok(AblationRow {
                variant,
                src: m.src,
                mae: m.mae,
            })
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("variant,src,mae\n");
    for r in rows {
        s.push_str(&format!("{},{:.6},{:.6}\n", r.variant, r.src, r.mae));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for t in Toggle::ALL {
            assert_eq!(t.name().parse::<Toggle>().unwrap(), t);
        }
        assert!("drop-all".parse::<Toggle>().is_err());
    }

    #[test]
    fn toggles_touch_one_setting() {
        let base = RunConfig::default();
        assert!(!Toggle::DropGeo.apply(&base).features.geo);
        assert!(Toggle::DropGeo.apply(&base).features.temporal);
        assert!(Toggle::SingleSplit.apply(&base).ensemble.single_split);
        assert!(!Toggle::NoPseudo.apply(&base).pseudo.enabled);
        assert!(!Toggle::NoIqr.apply(&base).ensemble.iqr);
    }
}
