//! Little-endian readers and writers for the fixed-header binary files.
//!
//! Every file starts with an 8-byte ASCII magic followed by `u32` header
//! fields. Errors carry the file path and the byte offset of the problem.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{OmogError, Result};

pub const FEATURES_MAGIC: &[u8; 8] = b"OMOGFEAT";
pub const EDGES_MAGIC: &[u8; 8] = b"OMOGEDGE";
pub const LABELS_MAGIC: &[u8; 8] = b"OMOGLABL";
pub const LABEL_EMB_MAGIC: &[u8; 8] = b"OMOGLEMB";
pub const HOPS_MAGIC: &[u8; 8] = b"OMOGHOPS";
pub const PARAMS_MAGIC: &[u8; 8] = b"OMOGPARM";
pub const CENTROID_MAGIC: &[u8; 8] = b"OMOGCNTR";

/// Cursor over an in-memory file that reports errors with path and offset.
pub struct ByteReader {
    path: PathBuf,
    buf: Vec<u8>,
    pos: usize,
}

impl ByteReader {
    pub fn open(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| OmogError::io(path, e))?;
        Ok(Self::from_bytes(path, buf))
    }

    pub fn from_bytes(path: &Path, buf: Vec<u8>) -> Self {
        ByteReader {
            path: path.to_path_buf(),
            buf,
            pos: 0,
        }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn error(&self, message: impl Into<String>) -> OmogError {
        OmogError::format(&self.path, self.pos as u64, message)
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&[u8]> {
        if self.remaining() < len {
            return Err(self.error(format!(
                "truncated: need {len} bytes for {what}, {} left",
                self.remaining()
            )));
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 8]) -> Result<()> {
        let at = self.pos;
        let got = self.take(8, "magic")?;
        if got != magic {
            let got = String::from_utf8_lossy(got).into_owned();
            return Err(OmogError::format(
                &self.path,
                at as u64,
                format!(
                    "bad magic: expected {:?}, found {:?}",
                    String::from_utf8_lossy(magic),
                    got
                ),
            ));
        }
        Ok(())
    }

    pub fn u16(&mut self) -> Result<u16> {
        let b = self.take(2, "u16")?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4, "u32")?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn bytes(&mut self, len: usize, what: &str) -> Result<Vec<u8>> {
        Ok(self.take(len, what)?.to_vec())
    }

    /// Reads `count` float32 values, rejecting NaN/Inf with the offending
    /// value's offset.
    pub fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let start = self.pos;
        let raw = self.take(count * 4, what)?;
        let mut out = Vec::with_capacity(count);
        for (i, c) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if !v.is_finite() {
                return Err(OmogError::format(
                    &self.path,
                    (start + 4 * i) as u64,
                    format!("non-finite value {v} in {what}"),
                ));
            }
            out.push(v);
        }
        Ok(out)
    }

    pub fn i32s(&mut self, count: usize, what: &str) -> Result<Vec<i32>> {
        let raw = self.take(count * 4, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn u32s(&mut self, count: usize, what: &str) -> Result<Vec<u32>> {
        let raw = self.take(count * 4, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.error(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

/// Growable little-endian byte buffer.
#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn magic(&mut self, magic: &[u8; 8]) -> &mut Self {
        self.buf.extend_from_slice(magic);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn f32s(&mut self, data: &[f32]) -> &mut Self {
        self.buf.reserve(data.len() * 4);
        for v in data {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self
    }

    pub fn i32s(&mut self, data: &[i32]) -> &mut Self {
        for v in data {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self
    }

    pub fn u32s(&mut self, data: &[u32]) -> &mut Self {
        for v in data {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| OmogError::io(path, e))?;
        f.write_all(&self.buf).map_err(|e| OmogError::io(path, e))?;
        f.sync_all().map_err(|e| OmogError::io(path, e))
    }
}

/// Dense float32 matrix file: magic, u32 rows, u32 cols, row-major data.
pub fn write_matrix(path: &Path, magic: &[u8; 8], rows: usize, cols: usize, data: &[f32]) -> Result<()> {
    debug_assert_eq!(data.len(), rows * cols);
    let mut w = ByteWriter::new();
    w.magic(magic).u32(rows as u32).u32(cols as u32).f32s(data);
    w.write_to(path)
}

pub fn read_matrix(path: &Path, magic: &[u8; 8]) -> Result<(usize, usize, Vec<f32>)> {
    let mut r = ByteReader::open(path)?;
    r.expect_magic(magic)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let need = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| r.error("header dimensions overflow"))?;
    if r.remaining() != need {
        return Err(r.error(format!(
            "shape mismatch: header declares {rows}x{cols} ({need} data bytes), file has {} data bytes",
            r.remaining()
        )));
    }
    let data = r.f32s(rows * cols, "matrix data")?;
    Ok((rows, cols, data))
}
