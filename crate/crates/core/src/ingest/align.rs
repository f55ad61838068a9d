use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::domain::Post;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinPolicy {
    #[default]
    Inner,
    RequireAll,
}

#[derive(Debug, Clone)]
pub struct Aligned {
    pub posts: Vec<Post>,
    pub tables: Vec<EmbeddingTable>,
    pub dropped: usize,
}

/// Restrict posts and post-keyed tables to a common id order (post file order).
pub fn align(posts: Vec<Post>, tables: Vec<EmbeddingTable>, policy: JoinPolicy) -> Result<Aligned> {
    let indexes: Vec<HashMap<&str, usize>> = tables.iter().map(|t| t.index()).collect();
    let mut keep = Vec::with_capacity(posts.len());
    for (i, p) in posts.iter().enumerate() {
        let mut rows = Vec::with_capacity(tables.len());
        for idx in &indexes {
            match idx.get(p.post_id.as_str()) {
                Some(&r) => rows.push(r),
                None => break,
            }
        }
        if rows.len() == tables.len() {
            keep.push((i, rows));
        }
    }
    if policy == JoinPolicy::RequireAll {
        for (t, idx) in tables.iter().zip(&indexes) {
            let missing: Vec<String> = posts
                .iter()
                .filter(|p| !idx.contains_key(p.post_id.as_str()))
                .take(10)
                .map(|p| p.post_id.clone())
                .collect();
            if !missing.is_empty() {
                return Err(Error::MissingIds {
                    table: t.source_tag.clone(),
                    ids: missing,
                });
            }
        }
    }
    let dropped = posts.len() - keep.len();
    if dropped > 0 {
        log::info!("align: dropped {dropped} of {} posts missing from an embedding table", posts.len());
    }
    let out_tables = tables
        .iter()
        .enumerate()
        .map(|(t, table)| {
            let rows: Vec<usize> = keep.iter().map(|(_, r)| r[t]).collect();
            table.select(&rows)
        })
        .collect();
    let keep_set: Vec<usize> = keep.iter().map(|(i, _)| *i).collect();
    let mut posts = posts;
    let out_posts = if dropped == 0 {
        posts
    } else {
        let mut it = keep_set.into_iter().peekable();
        let mut out = Vec::with_capacity(posts.len() - dropped);
        for (i, p) in posts.drain(..).enumerate() {
            if it.peek() == Some(&i) {
                it.next();
                out.push(p);
            }
        }
        out
    };
    Ok(Aligned {
        posts: out_posts,
        tables: out_tables,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn posts(ids: &[&str]) -> Vec<Post> {
        ids.iter()
            .map(|id| Post {
                post_id: id.to_string(),
                ..Default::default()
            })
            .collect()
    }

    fn table(ids: &[&str]) -> EmbeddingTable {
        let data = (0..ids.len()).map(|i| i as f64).collect();
        EmbeddingTable::new("t", ids.iter().map(|s| s.to_string()).collect(), 1, data).unwrap()
    }

    #[test]
    fn identity_when_ids_match() {
        let a = align(posts(&["p1", "p2"]), vec![table(&["p1", "p2"])], JoinPolicy::Inner).unwrap();
        assert_eq!(a.posts.len(), 2);
        assert_eq!(a.tables[0].ids, ["p1", "p2"]);
        assert_eq!(a.dropped, 0);
    }

    #[test]
    fn inner_intersects_and_reorders_tables() {
        let a = align(
            posts(&["p3", "p1", "p2"]),
            vec![table(&["p2", "p3"])],
            JoinPolicy::Inner,
        )
        .unwrap();
        assert_eq!(a.posts.iter().map(|p| p.post_id.as_str()).collect::<Vec<_>>(), ["p3", "p2"]);
        assert_eq!(a.tables[0].ids, ["p3", "p2"]);
        assert_eq!(a.tables[0].data, [1.0, 0.0]);
        assert_eq!(a.dropped, 1);
    }

    #[test]
    fn require_all_names_missing_id() {
        match align(posts(&["p1", "p2"]), vec![table(&["p1"])], JoinPolicy::RequireAll) {
            Err(Error::MissingIds { ids, .. }) => assert_eq!(ids, ["p2"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn require_all_lists_at_most_ten() {
        let ids: Vec<String> = (0..30).map(|i| format!("p{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
        match align(posts(&refs), vec![table(&["p0"])], JoinPolicy::RequireAll) {
            Err(Error::MissingIds { ids, .. }) => assert_eq!(ids.len(), 10),
            other => panic!("{other:?}"),
        }
    }
}
