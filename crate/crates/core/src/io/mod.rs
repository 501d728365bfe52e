//! File formats and dataset layout. All binary formats are little-endian.

mod checkpoint;
mod config;
mod cube;
mod dataset;
mod ppm;

pub use checkpoint::{
    load_checkpoint, load_loss_network, save_checkpoint, save_loss_network, Architecture, Checkpoint, Entry,
    EntryKind, LoadedModel, OptimizerBlock, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{DataConfig, RunConfig, Track};
pub use cube::{decode_cube, encode_cube, read_cube, write_cube, CUBE_DTYPE_F32, CUBE_MAGIC};
pub use dataset::{load_pairs, load_sample, pair_dataset, PairList, PairPaths, SkippedPair};
pub use ppm::{decode_ppm, encode_ppm, read_rgb, write_rgb};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Bounds-checked little-endian reader that reports byte offsets.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated { expected: self.pos + n, actual: self.buf.len() });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let len = n.checked_mul(4).ok_or_else(|| self.format("payload length overflows"))?;
        let raw = self.bytes(len)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }

    pub fn format(&self, detail: impl Into<String>) -> Error {
        Error::Format { offset: self.pos, detail: detail.into() }
    }

    pub fn format_at(&self, offset: usize, detail: impl Into<String>) -> Error {
        Error::Format { offset, detail: detail.into() }
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, vs: &[f32]) {
    out.reserve(vs.len() * 4);
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn to_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Contract(format!("{what} {n} does not fit in 32 bits")))
}
