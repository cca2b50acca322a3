//! A synthetic weak-supervision benchmark.
//!
//! Each class has a random unit prototype that doubles as its text anchor.
//! Visual features are a fixed random linear map of the prototype plus
//! Gaussian noise. Every sample carries `K` sentence embeddings: a few
//! informative ones tightly around its own anchor, the rest around the
//! anchors of other classes with a wider spread.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{write_bank, write_manifest, SentenceEntry, Split, TripletRecord};
use crate::error::{CoreError, Result};
use crate::interchange;
use crate::linalg::{l2_normalize, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub k: usize,
    pub dim: usize,
    /// Fraction of the `K` sentences drawn near the sample's own anchor (at least one).
    pub informative_fraction: f64,
    /// Norm of the visual noise relative to the unit prototype.
    pub noise: f64,
    pub informative_spread: f64,
    pub distractor_spread: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 8,
            n_train: 2000,
            n_test: 500,
            k: 8,
            dim: 64,
            informative_fraction: 0.125,
            noise: 2.0,
            informative_spread: 0.3,
            distractor_spread: 1.5,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::InvalidConfig(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.k < 2 {
            return bad(format!("need at least 2 sentences per sample, got {}", self.k));
        }
        if self.dim < 2 {
            return bad(format!("dimension must be at least 2, got {}", self.dim));
        }
        if !(0.0..=1.0).contains(&self.informative_fraction) {
            return bad("informative_fraction must lie in [0, 1]".into());
        }
        for (name, v) in [
            ("noise", self.noise),
            ("informative_spread", self.informative_spread),
            ("distractor_spread", self.distractor_spread),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn informative_count(&self) -> usize {
        ((self.informative_fraction * self.k as f64).round() as usize).clamp(1, self.k)
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub records: Vec<TripletRecord>,
    pub bank: Vec<SentenceEntry>,
    /// One row per record, in record order.
    pub features: Matrix,
    /// Class anchors, one row per class; also the zero-shot prompt embeddings.
    pub anchors: Matrix,
    pub class_names: Vec<String>,
    /// Bank embeddings, in bank order.
    pub sentence_embeddings: Matrix,
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

fn near(anchor: &[f64], spread: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = anchor.len();
    let noise = gaussian(rng, d, spread / (d as f64).sqrt());
    let raw: Vec<f64> = anchor.iter().zip(&noise).map(|(a, n)| a + n).collect();
    l2_normalize(&raw).into_inner()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    let c = cfg.classes;
    let mut anchors = Vec::with_capacity(c);
    for _ in 0..c {
        let g = gaussian(&mut rng, d, 1.0);
        anchors.push(l2_normalize(&g).unit()?);
    }
    let map = gaussian(&mut rng, d * d, 1.0 / (d as f64).sqrt());

    let informative = cfg.informative_count();
    let total = cfg.n_train + cfg.n_test;
    let mut records = Vec::with_capacity(total);
    let mut bank = Vec::with_capacity(total * cfg.k);
    let mut sentence_rows = Vec::with_capacity(total * cfg.k * d);
    let mut features = Vec::with_capacity(total * d);
    for i in 0..total {
        let (split, local) = if i < cfg.n_train {
            (Split::Train, i)
        } else {
            (Split::Test, i - cfg.n_train)
        };
        let label = local % c;

        let noise = gaussian(&mut rng, d, cfg.noise / (d as f64).sqrt());
        let latent: Vec<f64> = anchors[label].iter().zip(&noise).map(|(a, n)| a + n).collect();
        features.extend(map.chunks_exact(d).map(|row| crate::linalg::dot(row, &latent)));

        let mut sentences = Vec::with_capacity(cfg.k);
        for j in 0..cfg.k {
            if j < informative {
                sentences.push(near(&anchors[label], cfg.informative_spread, &mut rng));
            } else {
                let mut other = rng.random_range(0..c - 1);
                if other >= label {
                    other += 1;
                }
                sentences.push(near(&anchors[other], cfg.distractor_spread, &mut rng));
            }
        }
        sentences.shuffle(&mut rng);
        let mut ids = Vec::with_capacity(cfg.k);
        for s in sentences {
            let id = bank.len() as u64;
            bank.push(SentenceEntry {
                id,
                text: format!("synthetic sentence {id}"),
            });
            sentence_rows.extend(s);
            ids.push(id);
        }
        records.push(TripletRecord {
            tile_id: format!("synth_{i:06}"),
            easting: (i as i64 % 1000) * 100,
            northing: (i as i64 / 1000) * 100,
            species: vec![format!("class_{label}")],
            sentence_ids: ids,
            eunis_label: label,
            split,
        });
    }
    let bank_len = bank.len();
    Ok(SynthData {
        records,
        bank,
        features: Matrix::from_vec(total, d, features)?,
        anchors: Matrix::from_rows(&anchors, d)?,
        class_names: (0..c).map(|k| format!("class_{k}")).collect(),
        sentence_embeddings: Matrix::from_vec(bank_len, d, sentence_rows)?,
    })
}

pub const MANIFEST: &str = "manifest.jsonl";
pub const SENTENCES: &str = "sentences.jsonl";
pub const FEATURES: &str = "features.eemb";
pub const TEXT: &str = "text.eemb";
pub const PROMPTS: &str = "prompts.txt";

/// Writes the manifest, sentence bank, visual features (keyed by tile id),
/// text embeddings (keyed by sentence text and class name) and class list.
pub fn write(data: &SynthData, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    write_manifest(&dir.join(MANIFEST), &data.records)?;
    write_bank(&dir.join(SENTENCES), &data.bank)?;

    let features = dir.join(FEATURES);
    interchange::write_matrix(&features, &data.features)?;
    let tiles: Vec<String> = data.records.iter().map(|r| r.tile_id.clone()).collect();
    interchange::write_meta(&features, &tiles)?;

    let text = dir.join(TEXT);
    let d = data.anchors.cols();
    let mut rows = data.sentence_embeddings.as_slice().to_vec();
    rows.extend_from_slice(data.anchors.as_slice());
    let all = Matrix::from_vec(data.bank.len() + data.anchors.rows(), d, rows)?;
    interchange::write_matrix(&text, &all)?;
    let mut sources: Vec<String> = data.bank.iter().map(|e| e.text.clone()).collect();
    sources.extend(data.class_names.iter().cloned());
    interchange::write_meta(&text, &sources)?;

    let mut prompts = data.class_names.join("\n");
    prompts.push('\n');
    let p = dir.join(PROMPTS);
    fs::write(&p, prompts).map_err(|e| CoreError::io(&p, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zeroshot::classify;

    #[test]
    fn separable_limit_is_perfect() {
        let cfg = SynthConfig {
            n_train: 40,
            n_test: 0,
            noise: 0.0,
            informative_fraction: 1.0,
            ..SynthConfig::default()
        };
        let data = generate(&cfg).unwrap();
        let protos: Vec<Vec<f64>> = data
            .records
            .iter()
            .map(|r| data.anchors.row(r.eunis_label).to_vec())
            .collect();
        let preds = classify(&Matrix::from_rows(&protos, cfg.dim).unwrap(), &data.anchors).unwrap();
        let labels: Vec<usize> = data.records.iter().map(|r| r.eunis_label).collect();
        assert_eq!(preds, labels);
        // every sentence is informative: nearest anchor is the own class
        for r in &data.records {
            for &id in &r.sentence_ids {
                let s = Matrix::from_rows(&[data.sentence_embeddings.row(id as usize)], cfg.dim).unwrap();
                assert_eq!(classify(&s, &data.anchors).unwrap()[0], r.eunis_label);
            }
        }
    }

    #[test]
    fn default_benchmark_is_balanced() {
        let data = generate(&SynthConfig::default()).unwrap();
        for split in [Split::Train, Split::Test] {
            let mut counts = [0usize; 8];
            for r in data.records.iter().filter(|r| r.split == split) {
                counts[r.eunis_label] += 1;
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{counts:?}");
        }
        assert_eq!(data.records.len(), 2500);
        assert!(data.records.iter().all(|r| r.sentence_ids.len() == 8));
        assert_eq!(SynthConfig::default().informative_count(), 1);
    }

    #[test]
    fn same_seed_same_files() {
        let cfg = SynthConfig {
            n_train: 30,
            n_test: 10,
            ..SynthConfig::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write(&generate(&cfg).unwrap(), a.path()).unwrap();
        write(&generate(&cfg).unwrap(), b.path()).unwrap();
        for f in [MANIFEST, SENTENCES, FEATURES, TEXT, PROMPTS, "features.eemb.meta.jsonl", "text.eemb.meta.jsonl"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }
}
