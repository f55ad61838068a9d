//! The PFE1 embedding container.
//!
//! Layout (little-endian): `PFE1`, u32 rows, u32 dim, u8 tag length, tag
//! bytes, then per row a u16 id length, id bytes and `dim` f32 values.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};

pub const PFE_MAGIC: &[u8; 4] = b"PFE1";

/// Precomputed encoder outputs keyed by id. Values are widened to f64 on read.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub ids: Vec<String>,
    pub dim: usize,
    pub data: Vec<f64>,
    pub source_tag: String,
}

impl EmbeddingTable {
    pub fn new(source_tag: &str, ids: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("embedding dim must be positive".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::Shape(format!(
                "embedding data length {} != {} x {dim}",
                data.len(),
                ids.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Duplicate(id.clone()));
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("embedding values must be finite".into()));
        }
        Ok(EmbeddingTable {
            ids,
            dim,
            data,
            source_tag: source_tag.to_string(),
        })
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// Rows picked (and reordered) by position.
    pub fn select(&self, rows: &[usize]) -> EmbeddingTable {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        EmbeddingTable {
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            dim: self.dim,
            data,
            source_tag: self.source_tag.clone(),
        }
    }
}

pub fn encode_embeddings(table: &EmbeddingTable) -> Result<Vec<u8>> {
    let rows = u32::try_from(table.rows()).map_err(|_| Error::Input("too many rows".into()))?;
    let dim = u32::try_from(table.dim).map_err(|_| Error::Input("dim too large".into()))?;
    let tag = table.source_tag.as_bytes();
    if tag.len() > u8::MAX as usize {
        return Err(Error::Input("source tag longer than 255 bytes".into()));
    }
    let mut out = Vec::with_capacity(13 + tag.len() + table.data.len() * 4);
    out.extend_from_slice(PFE_MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.push(tag.len() as u8);
    out.extend_from_slice(tag);
    for (i, id) in table.ids.iter().enumerate() {
        let idb = id.as_bytes();
        let len = u16::try_from(idb.len())
            .map_err(|_| Error::Input(format!("id `{id}` longer than 65535 bytes")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(idb);
        for &v in table.row(i) {
            let f = v as f32;
            if !f.is_finite() {
                return Err(Error::Input(format!(
                    "value {v} in row `{id}` is not representable as a finite f32"
                )));
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_embeddings(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let bytes = encode_embeddings(table)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated while reading {what}: need {n} bytes, {} remain",
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

pub fn decode_embeddings(buf: &[u8]) -> Result<EmbeddingTable> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4, "magic")? != PFE_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic, expected PFE1".into(),
        });
    }
    let rows = u32::from_le_bytes(c.take(4, "row count")?.try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(c.take(4, "dim")?.try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(Error::Format {
            offset: 8,
            message: "dim must be positive".into(),
        });
    }
    let tag_len = c.take(1, "tag length")?[0] as usize;
    let tag_at = c.pos;
    let tag = std::str::from_utf8(c.take(tag_len, "source tag")?)
        .map_err(|_| Error::Format {
            offset: tag_at as u64,
            message: "source tag is not UTF-8".into(),
        })?
        .to_string();
    let mut ids = Vec::with_capacity(rows);
    let mut seen = HashSet::with_capacity(rows);
    let mut data = Vec::with_capacity(rows.saturating_mul(dim).min(1 << 28));
    for r in 0..rows {
        let rec_at = c.pos;
        let id_len = u16::from_le_bytes(c.take(2, &format!("id length of row {r}"))?.try_into().unwrap());
        let id_at = c.pos;
        let id = std::str::from_utf8(c.take(id_len as usize, &format!("id of row {r}"))?)
            .map_err(|_| Error::Format {
                offset: id_at as u64,
                message: format!("id of row {r} is not UTF-8"),
            })?
            .to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Format {
                offset: rec_at as u64,
                message: format!("duplicate id `{id}`"),
            });
        }
        let payload = c.take(dim * 4, &format!("values of row {r}"))?;
        for (j, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Format {
                    offset: (c.pos - dim * 4 + j * 4) as u64,
                    message: format!("non-finite value in row `{id}`"),
                });
            }
            data.push(f64::from(v));
        }
        ids.push(id);
    }
    if c.pos != buf.len() {
        return Err(c.err(format!("{} trailing bytes after {rows} rows", buf.len() - c.pos)));
    }
    Ok(EmbeddingTable {
        ids,
        dim,
        data,
        source_tag: tag,
    })
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}
