//! Binary model container shared by the network and the regression baselines.
//!
//! Layout (all integers u32 LE, all reals f64 LE):
//! `b"CDMS"`, version, model kind, then a kind-specific body. Readers reject
//! trailing bytes so that a checkpoint decodes to exactly one model.

use std::path::Path;

use crate::error::{CheckpointError, Error, Result};

pub const MAGIC: [u8; 4] = *b"CDMS";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum ModelKind {
    Mlp = 1,
    Regression = 2,
}

impl ModelKind {
    fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            1 => Some(ModelKind::Mlp),
            2 => Some(ModelKind::Regression),
            _ => None,
        }
    }
}

pub(crate) struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(kind: ModelKind) -> Self {
        let mut enc = Self { buf: Vec::new() };
        enc.buf.extend_from_slice(&MAGIC);
        enc.u32(VERSION);
        enc.u32(kind as u32);
        enc
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s<'a>(&mut self, values: impl IntoIterator<Item = &'a f64>) {
        for v in values {
            self.f64(*v);
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    /// Checks magic, version and kind.
    pub fn new(bytes: &'a [u8], kind: ModelKind) -> std::result::Result<Self, CheckpointError> {
        let found = peek_kind(bytes)?;
        if found != kind {
            return Err(CheckpointError::WrongKind {
                expected: kind as u32,
                found: found as u32,
            });
        }
        Ok(Self { bytes, pos: 12 })
    }

    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(self.bytes.len()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u32(&mut self) -> std::result::Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f64(&mut self) -> std::result::Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, CheckpointError> {
        let raw = self.take(n.checked_mul(8).ok_or(CheckpointError::Truncated(self.bytes.len()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn f64_array<const N: usize>(&mut self) -> std::result::Result<[f64; N], CheckpointError> {
        let v = self.f64s(N)?;
        Ok(v.try_into().expect("length checked"))
    }

    pub fn finish(self) -> std::result::Result<(), CheckpointError> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(CheckpointError::Malformed(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )))
        }
    }
}

/// Validates the header and returns the stored model kind.
pub fn peek_kind(bytes: &[u8]) -> std::result::Result<ModelKind, CheckpointError> {
    if bytes.len() < 4 {
        return Err(CheckpointError::Truncated(bytes.len()));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    if bytes.len() < 12 {
        return Err(CheckpointError::Truncated(bytes.len()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let tag = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    ModelKind::from_tag(tag).ok_or_else(|| CheckpointError::Malformed(format!("unknown model kind {tag}")))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::file(path, e))
}

/// Reads only the header of the checkpoint at `path`.
pub fn kind_of(path: impl AsRef<Path>) -> Result<ModelKind> {
    Ok(peek_kind(&read_file(path.as_ref())?)?)
}
