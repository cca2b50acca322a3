//! Binary embedding files shared with external exporters.
//!
//! Layout (little-endian): `b"EEMB"`, version `u32`, dtype `u8` (1 = f32),
//! rows `u64`, dim `u32`, then `rows × dim` f32 values. Row provenance lives
//! in a `<file>.meta.jsonl` sidecar with one `{"row":int,"source":str}` per row.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 4] = b"EEMB";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 1 + 8 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl EmbeddingFile {
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_f64(&self, r: usize) -> Vec<f64> {
        self.row(r).iter().map(|&x| x as f64).collect()
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.rows, self.dim, self.data.iter().map(|&x| x as f64).collect())
            .expect("length checked on read")
    }
}

/// Writes to a temporary sibling and renames into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CoreError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CoreError::io(path, e))
}

pub fn encode(rows: usize, dim: usize, data: &[f32]) -> Result<Vec<u8>> {
    if data.len() != rows * dim {
        return Err(CoreError::ShapeMismatch {
            expected: rows * dim,
            actual: data.len(),
        });
    }
    let dim32 = u32::try_from(dim).map_err(|_| CoreError::InvalidConfig(format!("dimension {dim} too large")))?;
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&dim32.to_le_bytes());
    for x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn write(path: &Path, rows: usize, dim: usize, data: &[f32]) -> Result<()> {
    write_atomic(path, &encode(rows, dim, data)?)
}

/// Writes a matrix, rounding to f32.
pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let data: Vec<f32> = m.as_slice().iter().map(|&x| x as f32).collect();
    write(path, m.rows(), m.cols(), &data)
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<EmbeddingFile> {
    if bytes.len() < HEADER_LEN {
        return Err(CoreError::corrupt(path, format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(CoreError::corrupt(path, "bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CoreError::corrupt(path, format!("unsupported version {version}")));
    }
    let dtype = bytes[8];
    if dtype != DTYPE_F32 {
        return Err(CoreError::corrupt(path, format!("unsupported dtype code {dtype}")));
    }
    let rows = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
    let dim = u32::from_le_bytes(bytes[17..21].try_into().unwrap()) as u64;
    if dim == 0 {
        return Err(CoreError::corrupt(path, "zero dimension"));
    }
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| CoreError::corrupt(path, "shape overflows"))?;
    let body = (bytes.len() - HEADER_LEN) as u64;
    if body < expected {
        return Err(CoreError::corrupt(
            path,
            format!("truncated: expected {expected} data bytes, found {body}"),
        ));
    }
    if body > expected {
        return Err(CoreError::corrupt(path, format!("{} trailing bytes", body - expected)));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(EmbeddingFile {
        rows: rows as usize,
        dim: dim as usize,
        data,
    })
}

pub fn read(path: &Path) -> Result<EmbeddingFile> {
    let bytes = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    decode(path, &bytes)
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.jsonl");
    PathBuf::from(s)
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaLine {
    row: u64,
    source: String,
}

/// Writes the sidecar for the embedding file at `path`.
pub fn write_meta(path: &Path, sources: &[String]) -> Result<()> {
    let mut out = Vec::new();
    for (row, source) in sources.iter().enumerate() {
        let line = serde_json::to_string(&MetaLine {
            row: row as u64,
            source: source.clone(),
        })
        .expect("serialisable");
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    write_atomic(&meta_path(path), &out)
}

/// Reads a sidecar file; rows must be listed in order starting at 0.
pub fn read_meta(meta: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(meta).map_err(|e| CoreError::io(meta, e))?;
    let mut sources = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CoreError::io(meta, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: MetaLine = serde_json::from_str(&line).map_err(|e| CoreError::Parse {
            path: meta.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if parsed.row != sources.len() as u64 {
            return Err(CoreError::Parse {
                path: meta.to_path_buf(),
                line: i + 1,
                reason: format!("expected row {}, found {}", sources.len(), parsed.row),
            });
        }
        sources.push(parsed.source);
    }
    Ok(sources)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub rows: usize,
    pub dim: usize,
    pub min_norm: f64,
    pub max_norm: f64,
    pub mean_norm: f64,
    pub has_meta: bool,
}

/// Checks header, shape, finiteness and sidecar consistency, and reports row
/// norm statistics.
pub fn verify(path: &Path) -> Result<VerifyReport> {
    let file = read(path)?;
    let mut min_norm = f64::INFINITY;
    let mut max_norm: f64 = 0.0;
    let mut sum = 0.0;
    for r in 0..file.rows {
        let row = file.row(r);
        if row.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::corrupt(path, format!("non-finite value in row {r}")));
        }
        let n = row.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
        min_norm = min_norm.min(n);
        max_norm = max_norm.max(n);
        sum += n;
    }
    let meta = meta_path(path);
    let has_meta = meta.exists();
    if has_meta {
        let sources = read_meta(&meta)?;
        if sources.len() != file.rows {
            return Err(CoreError::corrupt(
                path,
                format!("sidecar lists {} rows, file has {}", sources.len(), file.rows),
            ));
        }
    }
    if file.rows == 0 {
        min_norm = 0.0;
    }
    Ok(VerifyReport {
        rows: file.rows,
        dim: file.dim,
        min_norm,
        max_norm,
        mean_norm: if file.rows == 0 { 0.0 } else { sum / file.rows as f64 },
        has_meta,
    })
}
