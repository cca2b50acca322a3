//! Manifest and sentence-bank records, and their in-memory training form.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::embed::TextEncoder;
use crate::error::{CoreError, Result};
use crate::interchange::{self, EmbeddingFile};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(CoreError::InvalidConfig(format!("unknown split {other:?}"))),
        }
    }
}

/// One image tile with its observed species and candidate sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub tile_id: String,
    pub easting: i64,
    pub northing: i64,
    pub species: Vec<String>,
    pub sentence_ids: Vec<u64>,
    pub eunis_label: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceEntry {
    pub id: u64,
    pub text: String,
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| CoreError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| CoreError::io(path, e))?;
    }
    w.flush().map_err(|e| CoreError::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CoreError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<TripletRecord>> {
    read_jsonl(path)
}

pub fn write_manifest(path: &Path, records: &[TripletRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_bank(path: &Path) -> Result<Vec<SentenceEntry>> {
    read_jsonl(path)
}

pub fn write_bank(path: &Path, entries: &[SentenceEntry]) -> Result<()> {
    write_jsonl(path, entries)
}

/// Sentence texts with their embeddings, addressable by bank id.
#[derive(Debug, Clone)]
pub struct SentenceBank {
    ids: Vec<u64>,
    texts: Vec<String>,
    embeddings: Matrix,
    index: HashMap<u64, usize>,
}

impl SentenceBank {
    pub fn embed(entries: &[SentenceEntry], encoder: &dyn TextEncoder) -> Result<Self> {
        let dim = encoder.dim();
        let mut data = Vec::with_capacity(entries.len() * dim);
        for e in entries {
            let v = encoder.embed(&e.text)?;
            if v.len() != dim {
                return Err(CoreError::DimMismatch {
                    left: v.len(),
                    right: dim,
                });
            }
            data.extend(v);
        }
        let embeddings = Matrix::from_vec(entries.len(), dim, data)?;
        let index = entries.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
        Ok(Self {
            ids: entries.iter().map(|e| e.id).collect(),
            texts: entries.iter().map(|e| e.text.clone()).collect(),
            embeddings,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn row_of(&self, id: u64) -> Result<usize> {
        self.index.get(&id).copied().ok_or(CoreError::UnknownSentence(id))
    }

    pub fn id(&self, row: usize) -> u64 {
        self.ids[row]
    }

    pub fn text(&self, row: usize) -> &str {
        &self.texts[row]
    }

    pub fn embedding(&self, row: usize) -> &[f64] {
        self.embeddings.row(row)
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }
}

/// Tile features keyed by the `source` column of the sidecar.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    file: EmbeddingFile,
    index: HashMap<String, usize>,
}

impl FeatureStore {
    pub fn open(path: &Path) -> Result<Self> {
        let file = interchange::read(path)?;
        let sources = interchange::read_meta(&interchange::meta_path(path))?;
        if sources.len() != file.rows {
            return Err(CoreError::corrupt(
                path,
                format!("sidecar has {} rows, file has {}", sources.len(), file.rows),
            ));
        }
        Ok(Self::new(file, sources))
    }

    pub fn new(file: EmbeddingFile, sources: Vec<String>) -> Self {
        let mut index = HashMap::new();
        for (row, s) in sources.into_iter().enumerate() {
            index.entry(s).or_insert(row);
        }
        Self { file, index }
    }

    pub fn dim(&self) -> usize {
        self.file.dim
    }

    pub fn get(&self, tile_id: &str) -> Result<Vec<f64>> {
        self.index
            .get(tile_id)
            .map(|&r| self.file.row_f64(r))
            .ok_or_else(|| CoreError::MissingFeatures(tile_id.to_string()))
    }
}

/// Frozen features, candidate sentence rows and labels for a set of tiles.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub features: Matrix,
    /// Rows into the sentence bank, per sample.
    pub sentences: Vec<Vec<usize>>,
    pub labels: Vec<usize>,
}

impl TrainingSet {
    pub fn from_records(records: &[&TripletRecord], features: &FeatureStore, bank: &SentenceBank) -> Result<Self> {
        let dim = features.dim();
        let mut data = Vec::with_capacity(records.len() * dim);
        let mut sentences = Vec::with_capacity(records.len());
        let mut labels = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.sentence_ids.is_empty() {
                return Err(CoreError::EmptySentenceSet { record: i });
            }
            data.extend(features.get(&r.tile_id)?);
            sentences.push(
                r.sentence_ids
                    .iter()
                    .map(|&id| bank.row_of(id))
                    .collect::<Result<Vec<_>>>()?,
            );
            labels.push(r.eunis_label);
        }
        Ok(Self {
            features: Matrix::from_vec(records.len(), dim, data)?,
            sentences,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
