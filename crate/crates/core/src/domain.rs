//! Records and the dense feature matrix shared by every stage.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One social-media post.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    #[serde(default)]
    pub user_id: String,
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub longitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo_accuracy: Option<i64>,
    #[serde(default)]
    pub caption: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub followers: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub following: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_post_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_pro: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<f64>,
}

impl Post {
    pub fn validate(&self) -> Result<()> {
        if self.post_id.is_empty() {
            return Err(Error::range("post_id", "must be nonempty"));
        }
        if let Some(lat) = self.latitude {
            if !(-90.0..=90.0).contains(&lat) {
                return Err(Error::range("latitude", format!("{lat} not in [-90, 90]")));
            }
        }
        if let Some(lon) = self.longitude {
            if !(-180.0..=180.0).contains(&lon) {
                return Err(Error::range("longitude", format!("{lon} not in [-180, 180]")));
            }
        }
        if let Some(y) = self.label {
            if !y.is_finite() {
                return Err(Error::range("label", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn has_geo(&self) -> bool {
        self.latitude.is_some() && self.longitude.is_some()
    }
}

/// The five modality blocks, in concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Visual,
    Textual,
    Spatial,
    User,
    Cross,
}

impl Block {
    pub const ALL: [Block; 5] = [
        Block::Visual,
        Block::Textual,
        Block::Spatial,
        Block::User,
        Block::Cross,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Visual => "visual",
            Block::Textual => "textual",
            Block::Spatial => "spatial",
            Block::User => "user",
            Block::Cross => "cross",
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Block {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Block::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "block",
                name: s.to_string(),
            })
    }
}

/// Dense row-major matrix with named columns and one id per row.
///
/// Column names follow `<block>.<name>`; `block_spans` records which
/// contiguous column range each modality occupies.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    col_names: Vec<String>,
    data: Vec<f64>,
    block_spans: Vec<(String, Range<usize>)>,
}

impl FeatureMatrix {
    /// Build a matrix holding a single named block.
    pub fn new(
        block: &str,
        ids: Vec<String>,
        col_names: Vec<String>,
        data: Vec<f64>,
    ) -> Result<Self> {
        let d = col_names.len();
        let spans = if d > 0 {
            vec![(block.to_string(), 0..d)]
        } else {
            Vec::new()
        };
        Self::with_spans(ids, col_names, data, spans)
    }

    pub fn with_spans(
        ids: Vec<String>,
        col_names: Vec<String>,
        data: Vec<f64>,
        block_spans: Vec<(String, Range<usize>)>,
    ) -> Result<Self> {
        if data.len() != ids.len() * col_names.len() {
            return Err(Error::Shape(format!(
                "data length {} != {} rows x {} cols",
                data.len(),
                ids.len(),
                col_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for c in &col_names {
            if !seen.insert(c.as_str()) {
                return Err(Error::Shape(format!("duplicate column name `{c}`")));
            }
        }
        let mut end = 0;
        for (name, r) in &block_spans {
            if r.start < end || r.end > col_names.len() || r.start > r.end {
                return Err(Error::Shape(format!("bad span for block `{name}`")));
            }
            end = r.end;
        }
        Ok(FeatureMatrix {
            ids,
            col_names,
            data,
            block_spans,
        })
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn cols(&self) -> usize {
        self.col_names.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn block_spans(&self) -> &[(String, Range<usize>)] {
        &self.block_spans
    }

    pub fn span(&self, block: &str) -> Option<Range<usize>> {
        self.block_spans
            .iter()
            .find(|(n, _)| n == block)
            .map(|(_, r)| r.clone())
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let d = self.cols();
        &self.data[r * d..(r + 1) * d]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, c)).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same ids and names, different values.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::with_spans(
            self.ids.clone(),
            self.col_names.clone(),
            data,
            self.block_spans.clone(),
        )
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Horizontally concatenate blocks that share the same ids in the same order.
pub fn concat_blocks(blocks: &[FeatureMatrix]) -> Result<FeatureMatrix> {
    let Some(first) = blocks.first() else {
        return Err(Error::Shape("no blocks to concatenate".into()));
    };
    let rows = first.rows();
    let block_label = |b: &FeatureMatrix, i: usize| {
        b.block_spans
            .first()
            .map(|(n, _)| n.clone())
            .unwrap_or_else(|| format!("#{i}"))
    };
    let mut names = Vec::new();
    let mut seen = HashSet::new();
    let mut spans = Vec::new();
    for (i, b) in blocks.iter().enumerate() {
        if b.ids != first.ids {
            return Err(Error::Alignment {
                block: block_label(b, i),
                message: "row ids differ from the first block".into(),
            });
        }
        let offset = names.len();
        for c in &b.col_names {
            if !seen.insert(c.clone()) {
                return Err(Error::Alignment {
                    block: block_label(b, i),
                    message: format!("duplicate column name `{c}`"),
                });
            }
            names.push(c.clone());
        }
        for (n, r) in &b.block_spans {
            spans.push((n.clone(), r.start + offset..r.end + offset));
        }
    }
    let d = names.len();
    let mut data = Vec::with_capacity(rows * d);
    for r in 0..rows {
        for b in blocks {
            data.extend_from_slice(b.row(r));
        }
    }
    FeatureMatrix::with_spans(first.ids.clone(), names, data, spans)
}
