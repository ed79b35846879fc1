//! Binary on-disk cache for [`SpectralBasis1D`].
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "FFSB" | version u32 | K u64 | n u64 | 5 × (len u64) | payload f64... | sha256 (32 bytes)
//! ```
//!
//! The checksum covers every preceding byte. Loading reproduces the tables
//! bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::SpectralBasis1D;
use crate::element::ReferenceElement;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FFSB";
pub const CACHE_FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// File name used for `(K, n)` inside a cache directory.
pub fn cache_path(dir: &Path, elements: usize, order: usize) -> PathBuf {
    dir.join(format!("spectral-K{elements}-n{order}.bin"))
}

pub fn write_cache(path: &Path, basis: &SpectralBasis1D) -> Result<()> {
    let tables = basis.raw_tables();
    let payload: usize = tables.iter().map(|t| t.len()).sum();
    let mut bytes = Vec::with_capacity(64 + 8 * payload + DIGEST_LEN);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CACHE_FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(basis.elements() as u64).to_le_bytes());
    bytes.extend_from_slice(&(basis.order() as u64).to_le_bytes());
    for t in &tables {
        bytes.extend_from_slice(&(t.len() as u64).to_le_bytes());
    }
    for t in &tables {
        for x in t.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    // Write-then-rename so readers never see a partial file.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Cache("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_cache(path: &Path, elements: usize, order: usize) -> Result<SpectralBasis1D> {
    let bytes = fs::read(path)?;
    if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
        return Err(Error::Cache("file too short".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Cache("checksum mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != CACHE_FORMAT_VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    let (k, n) = (r.u64()? as usize, r.u64()? as usize);
    if k != elements || n != order {
        return Err(Error::Cache(format!("file holds K={k}, n={n}; wanted K={elements}, n={order}")));
    }
    let rows = elements.saturating_sub(1) * order;
    let expected = [rows, rows * (order.saturating_sub(1)), rows, rows, rows];
    let mut lens = [0usize; 5];
    for (len, want) in lens.iter_mut().zip(expected) {
        *len = r.u64()? as usize;
        if *len != want {
            return Err(Error::Cache(format!("table length {len} does not match {want}")));
        }
    }
    let mut tables: Vec<Vec<f64>> = Vec::with_capacity(5);
    for len in lens {
        let raw = r.take(len * 8)?;
        tables.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect());
    }
    if r.pos != body.len() {
        return Err(Error::Cache("trailing bytes".into()));
    }
    let element = ReferenceElement::shared(order)?;
    let mut it = tables.into_iter();
    let mut next = || it.next().unwrap();
    Ok(SpectralBasis1D::from_parts(element, elements, next(), next(), next(), next(), next()))
}

/// Loads `(K, n)` from `dir`, rebuilding and rewriting the file when it is
/// missing or fails validation.
pub fn load_or_build(dir: &Path, elements: usize, order: usize) -> Result<SpectralBasis1D> {
    let path = cache_path(dir, elements, order);
    match read_cache(&path, elements, order) {
        Ok(basis) => return Ok(basis),
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => log::warn!("discarding spectral cache {}: {e}", path.display()),
    }
    let basis = SpectralBasis1D::new(elements, order)?;
    if let Err(e) = write_cache(&path, &basis) {
        log::warn!("could not write spectral cache {}: {e}", path.display());
    }
    Ok(basis)
}
