// SPDX-License-Identifier: Apache-2.0

//! Binary embedding container.
//!
//! Layout (little-endian): magic `TMCE`, `u32` version, `u32` dim, `u64` rows,
//! `rows × dim` `f32` values row-major, then one `u64` FNV-1a hash per row
//! identifying it. The ids themselves live in a plain-text sidecar next to
//! the container (same stem, `.ids` extension), one per line.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::affine::AffineMap;
use crate::error::{Error, Result};
use crate::tensor::Embeddings;

pub const MAGIC: &[u8; 4] = b"TMCE";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

/// 64-bit FNV-1a.
pub fn id_hash(id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub rows: usize,
    pub values: Vec<f32>,
    pub id_hashes: Vec<u64>,
}

impl EmbeddingFile {
    pub fn from_table<S: AsRef<str>>(table: &Embeddings, ids: &[S]) -> Result<Self> {
        Error::check_dim(table.rows(), ids.len())?;
        Ok(Self {
            dim: table.dim(),
            rows: table.rows(),
            values: table.as_slice().iter().map(|&x| x as f32).collect(),
            id_hashes: ids.iter().map(|s| id_hash(s.as_ref())).collect(),
        })
    }

    pub fn to_table(&self) -> Embeddings {
        let data = self.values.iter().map(|&x| f64::from(x)).collect();
        Embeddings::from_vec(self.rows, self.dim, data).expect("length checked on read")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.values.len() * 4 + self.id_hashes.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for h in &self.id_hashes {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format("truncated header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dim = u32_at(8) as usize;
        let rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let rows = usize::try_from(rows).map_err(|_| Error::Format("row count overflows".into()))?;
        let expected = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(rows.checked_mul(8)?))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::Format("size overflows".into()))?;
        if bytes.len() != expected {
            return Err(Error::Format(format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let body = &bytes[HEADER_LEN..];
        let (vals, hashes) = body.split_at(rows * dim * 4);
        Ok(Self {
            dim,
            rows,
            values: vals.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
            id_hashes: hashes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect(),
        })
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

pub fn ids_path(path: &Path) -> PathBuf {
    path.with_extension("ids")
}

/// Writes the container and its `.ids` sidecar.
pub fn save_table<S: AsRef<str>>(path: &Path, table: &Embeddings, ids: &[S]) -> Result<()> {
    let file = EmbeddingFile::from_table(table, ids)?;
    write_file(path, &file.to_bytes())?;
    let mut listing = String::new();
    for id in ids {
        let id = id.as_ref();
        if id.contains('\n') {
            return Err(Error::InvalidArgument(format!("id `{id}` contains a newline")));
        }
        listing.push_str(id);
        listing.push('\n');
    }
    write_file(&ids_path(path), listing.as_bytes())
}

/// Reads a container and its sidecar, checking every id against its hash.
pub fn load_table(path: &Path) -> Result<(Embeddings, Vec<String>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let file = EmbeddingFile::from_bytes(&bytes)?;
    let sidecar = ids_path(path);
    let listing = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let ids: Vec<String> = listing.lines().map(str::to_owned).collect();
    if ids.len() != file.rows {
        return Err(Error::Format(format!(
            "{} lists {} ids for {} rows",
            sidecar.display(),
            ids.len(),
            file.rows
        )));
    }
    if let Some((row, id)) = ids.iter().enumerate().find(|(i, id)| id_hash(id) != file.id_hashes[*i]) {
        return Err(Error::Format(format!("id `{id}` at row {row} does not match its hash")));
    }
    Ok((file.to_table(), ids))
}

/// Row ids used when an affine map is stored as a `(dim + 1) × dim` table.
pub fn affine_row_ids(dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("W{i}")).chain(std::iter::once("b".to_owned())).collect()
}

pub fn affine_to_table(map: &AffineMap) -> Embeddings {
    let d = map.dim();
    Embeddings::from_vec(d + 1, d, map.params.values.clone()).expect("W and b fill d + 1 rows")
}

pub fn affine_from_table(table: &Embeddings) -> Result<AffineMap> {
    let d = table.dim();
    Error::check_dim(d + 1, table.rows())?;
    AffineMap::from_params(d, table.as_slice().to_vec())
}

pub fn save_affine(path: &Path, map: &AffineMap) -> Result<()> {
    save_table(path, &affine_to_table(map), &affine_row_ids(map.dim()))
}

pub fn load_affine(path: &Path) -> Result<AffineMap> {
    let (table, _) = load_table(path)?;
    affine_from_table(&table)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}
