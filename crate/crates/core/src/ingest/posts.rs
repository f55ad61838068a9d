use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::domain::Post;
use crate::error::{Error, Result};

/// Read a JSONL posts file. Unknown keys are ignored; absent keys are missing values.
pub fn read_posts(path: &Path) -> Result<Vec<Post>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut posts = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let post: Post = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        post.validate().map_err(|e| match e {
            Error::Range { field, message } => Error::Range {
                field,
                message: format!("line {line_no}: {message}"),
            },
            other => other,
        })?;
        if !seen.insert(post.post_id.clone()) {
            return Err(Error::Duplicate(post.post_id));
        }
        posts.push(post);
    }
    Ok(posts)
}

pub fn write_posts(path: &Path, posts: &[Post]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in posts {
        let line = serde_json::to_string(p).expect("posts serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
