//! Text encoders: a deterministic bag-of-words stand-in and a lookup over
//! exported embedding files.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CoreError, Result};
use crate::interchange;
use crate::linalg::{l2_normalize, EmbeddingVector};

pub const MIN_PSEUDO_DIM: usize = 8;

pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    /// A unit-norm embedding of `text`.
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn token_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive(seed, &[fnv1a64(token.as_bytes())]));
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    l2_normalize(&raw).into_inner()
}

/// Sum of per-token random unit vectors, normalised. Lowercased and split on
/// whitespace, so word order is irrelevant.
pub fn pseudo_embed(text: &str, dim: usize, seed: u64) -> Result<EmbeddingVector> {
    if dim < MIN_PSEUDO_DIM {
        return Err(CoreError::InvalidConfig(format!(
            "pseudo embedding dimension must be at least {MIN_PSEUDO_DIM}, got {dim}"
        )));
    }
    let lower = text.to_lowercase();
    let mut sum = vec![0.0; dim];
    for token in lower.split_whitespace() {
        for (s, t) in sum.iter_mut().zip(token_vector(token, dim, seed)) {
            *s += t;
        }
    }
    EmbeddingVector::new(l2_normalize(&sum).unit()?)
}

#[derive(Debug, Clone)]
pub struct PseudoEncoder {
    pub dim: usize,
    pub seed: u64,
}

impl PseudoEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }
}

impl TextEncoder for PseudoEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        Ok(pseudo_embed(text, self.dim, self.seed)?.into_inner())
    }
}

/// Looks texts up in an exported embedding file via its metadata sidecar.
#[derive(Debug, Clone)]
pub struct FileEncoder {
    dim: usize,
    rows: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl FileEncoder {
    pub fn open(path: &Path) -> Result<Self> {
        let file = interchange::read(path)?;
        let sources = interchange::read_meta(&interchange::meta_path(path))?;
        if sources.len() != file.rows {
            return Err(CoreError::corrupt(
                path,
                format!("sidecar has {} rows, file has {}", sources.len(), file.rows),
            ));
        }
        let mut index = HashMap::new();
        for (row, source) in sources.into_iter().enumerate() {
            index.entry(source).or_insert(row);
        }
        let rows = (0..file.rows).map(|r| file.row_f64(r)).collect();
        Ok(Self {
            dim: file.dim,
            rows,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, text: &str) -> bool {
        self.index.contains_key(text)
    }
}

impl TextEncoder for FileEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.index
            .get(text)
            .map(|&r| self.rows[r].clone())
            .ok_or_else(|| CoreError::UnknownText(text.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cosine_sim, norm};

    #[test]
    fn deterministic_and_unit() {
        let a = pseudo_embed("alpine meadow", 32, 7).unwrap();
        let b = pseudo_embed("alpine meadow", 32, 7).unwrap();
        assert_eq!(a, b);
        assert!((norm(a.as_slice()) - 1.0).abs() < 1e-12);
        assert_ne!(a, pseudo_embed("alpine meadow", 32, 8).unwrap());
    }

    #[test]
    fn bag_of_words() {
        let a = pseudo_embed("alpine meadow", 32, 0).unwrap();
        let b = pseudo_embed("Meadow   ALPINE", 32, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_text_is_zero_norm() {
        assert!(matches!(pseudo_embed("", 16, 0), Err(CoreError::ZeroNorm)));
        assert!(matches!(pseudo_embed("  \t ", 16, 0), Err(CoreError::ZeroNorm)));
        assert!(pseudo_embed("x", 4, 0).is_err());
    }

    #[test]
    fn shared_tokens_raise_similarity() {
        let mut wins = 0;
        for i in 0..100 {
            let base: Vec<String> = (0..10).map(|j| format!("t{i}_{j}")).collect();
            let mut near = base.clone();
            near[9] = format!("other{i}");
            let far: Vec<String> = (0..10).map(|j| format!("f{i}_{j}")).collect();
            let a = pseudo_embed(&base.join(" "), 64, 1).unwrap();
            let n = pseudo_embed(&near.join(" "), 64, 1).unwrap();
            let f = pseudo_embed(&far.join(" "), 64, 1).unwrap();
            if cosine_sim(a.as_slice(), n.as_slice()).unwrap() > cosine_sim(a.as_slice(), f.as_slice()).unwrap() {
                wins += 1;
            }
        }
        assert_eq!(wins, 100);
    }

    #[test]
    fn file_encoder_looks_up_sources() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.eemb");
        let data = [1.0f32, 0.0, 0.0, 1.0];
        interchange::write(&path, 2, 2, &data).unwrap();
        interchange::write_meta(&path, &["a".to_string(), "b".to_string()]).unwrap();
        let enc = FileEncoder::open(&path).unwrap();
        assert_eq!(enc.embed("b").unwrap(), vec![0.0, 1.0]);
        assert!(matches!(enc.embed("c"), Err(CoreError::UnknownText(_))));
    }
}
