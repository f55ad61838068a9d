//! Versioned binary sections: little-endian, 64-bit floats, length-prefixed.
//!
//! Every artifact is `magic(4) | u32 version | sections...`, and a section is
//! `u8 tag length | tag | u64 payload length | payload`. Floats are written
//! by bit pattern so a read/write round trip is exact.

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_header(magic: &[u8; 4]) -> Self {
        let mut w = Self::new();
        w.buf.extend_from_slice(magic);
        w.u32(FORMAT_VERSION);
        w
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    pub fn bool(&mut self, v: bool) {
        self.u8(v as u8);
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn f64s(&mut self, xs: &[f64]) {
        self.usize(xs.len());
        for &x in xs {
            self.f64(x);
        }
    }

    pub fn usizes(&mut self, xs: &[usize]) {
        self.usize(xs.len());
        for &x in xs {
            self.usize(x);
        }
    }

    pub fn strs(&mut self, xs: &[String]) {
        self.usize(xs.len());
        for x in xs {
            self.str(x);
        }
    }

    pub fn section(&mut self, tag: &str, body: impl FnOnce(&mut Writer)) {
        assert!(tag.len() < 256, "section tag too long");
        self.u8(tag.len() as u8);
        self.buf.extend_from_slice(tag.as_bytes());
        let mut inner = Writer::new();
        body(&mut inner);
        self.u64(inner.buf.len() as u64);
        self.buf.extend_from_slice(&inner.buf);
    }
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    base: u64,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0, base: 0 }
    }

    /// Check the magic and version written by [`Writer::with_header`].
    pub fn with_header(buf: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        let mut r = Reader::new(buf);
        let m = r.take(4)?;
        if m != magic {
            return Err(r.err_at(0, format!("bad magic, expected {:?}", String::from_utf8_lossy(magic))));
        }
        let v = r.u32()?;
        if v != FORMAT_VERSION {
            return Err(Error::Version {
                found: v,
                expected: FORMAT_VERSION,
            });
        }
        Ok(r)
    }

    pub fn offset(&self) -> u64 {
        self.base + self.pos as u64
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn err_at(&self, pos: usize, message: String) -> Error {
        Error::Format {
            offset: self.base + pos as u64,
            message,
        }
    }

    pub fn err(&self, message: impl Into<String>) -> Error {
        self.err_at(self.pos, message.into())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated: need {n} bytes, {} remain",
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.err("length overflows usize"))
    }

    pub fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(self.err(format!("invalid bool byte {b}"))),
        }
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let at = self.pos;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.err_at(at, "invalid UTF-8".into()))
    }

    fn len_prefix(&mut self, elem: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.checked_mul(elem).is_none_or(|b| b > self.buf.len() - self.pos) {
            return Err(self.err(format!("length {n} exceeds remaining payload")));
        }
        Ok(n)
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len_prefix(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.len_prefix(8)?;
        (0..n).map(|_| self.usize()).collect()
    }

    pub fn strs(&mut self) -> Result<Vec<String>> {
        let n = self.len_prefix(4)?;
        (0..n).map(|_| self.str()).collect()
    }

    /// Open the next section, which must carry `tag`.
    pub fn section(&mut self, tag: &str) -> Result<Reader<'a>> {
        let at = self.pos;
        let n = self.u8()? as usize;
        let found = self.take(n)?;
        if found != tag.as_bytes() {
            return Err(self.err_at(
                at,
                format!(
                    "expected section `{tag}`, found `{}`",
                    String::from_utf8_lossy(found)
                ),
            ));
        }
        let len = self.usize()?;
        let start = self.pos;
        let body = self.take(len)?;
        Ok(Reader {
            buf: body,
            pos: 0,
            base: self.base + start as u64,
        })
    }

    pub fn finish(&self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(self.err(format!("{} trailing bytes", self.buf.len() - self.pos)))
        }
    }
}
