use std::path::Path;

use rayon::prelude::*;

use crate::domain::Post;
use crate::error::{Error, Result};
use crate::ingest::{align, read_embeddings, read_posts, EmbeddingTable, JoinPolicy};

pub const VISUAL_TAG: &str = "visual_clip";
pub const TEXT_TAG: &str = "text_clip";
/// Tag-keyed word vectors; pooled per post rather than joined by post id.
pub const GLOVE_TAG: &str = "tags_glove";

/// Posts with their post-keyed embedding tables aligned row for row.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub posts: Vec<Post>,
    pub visual: Option<EmbeddingTable>,
    pub text: Option<EmbeddingTable>,
    pub glove: Option<EmbeddingTable>,
    pub dropped: usize,
}

impl Dataset {
    pub fn new(posts: Vec<Post>, tables: Vec<EmbeddingTable>, join: JoinPolicy) -> Result<Self> {
        let mut glove = None;
        let mut keyed = Vec::new();
        for t in tables {
            match t.source_tag.as_str() {
                GLOVE_TAG => glove = Some(t),
                VISUAL_TAG | TEXT_TAG => {
                    if keyed.iter().any(|k: &EmbeddingTable| k.source_tag == t.source_tag) {
                        return Err(Error::Input(format!("two `{}` tables", t.source_tag)));
                    }
                    keyed.push(t)
                }
                other => {
                    return Err(Error::Unknown {
                        kind: "embedding source tag",
                        name: other.to_string(),
                    })
                }
            }
        }
        let aligned = align(posts, keyed, join)?;
        let mut visual = None;
        let mut text = None;
        for t in aligned.tables {
            if t.source_tag == VISUAL_TAG {
                visual = Some(t);
            } else {
                text = Some(t);
            }
        }
        Ok(Dataset {
            posts: aligned.posts,
            visual,
            text,
            glove,
            dropped: aligned.dropped,
        })
    }

    pub fn load(posts: &Path, tables: &[impl AsRef<Path> + Sync], join: JoinPolicy) -> Result<Self> {
        let (posts, tables) = rayon::join(
            || read_posts(posts),
            || {
                tables
                    .par_iter()
                    .map(|p| read_embeddings(p.as_ref()))
                    .collect::<Result<Vec<_>>>()
            },
        );
        Dataset::new(posts?, tables?, join)
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn labeled_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.posts[i].label.is_some()).collect()
    }

    pub fn unlabeled_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.posts[i].label.is_none()).collect()
    }
}
