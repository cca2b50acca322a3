//! Spatial block split: tiles are grouped into square blocks and whole
//! blocks are dealt to train, validation and test.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wincel_core::dataset::Split;

use crate::error::{DataError, Result};

pub const DEFAULT_BLOCK_SIZE_M: i64 = 20_000;
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.6, 0.1, 0.3];
pub const SPLITS: [Split; 3] = [Split::Train, Split::Val, Split::Test];

pub type BlockId = (i64, i64);

pub fn block_of(easting: i64, northing: i64, block_size_m: i64) -> BlockId {
    (easting.div_euclid(block_size_m), northing.div_euclid(block_size_m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub block_size_m: i64,
    pub fractions: [f64; 3],
    pub mapping: BTreeMap<BlockId, Split>,
}

impl SplitAssignment {
    pub fn split_of(&self, easting: i64, northing: i64) -> Split {
        self.mapping
            .get(&block_of(easting, northing, self.block_size_m))
            .copied()
            .unwrap_or(Split::Unassigned)
    }
}

pub fn validate_fractions(fractions: &[f64; 3]) -> Result<()> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::InvalidConfig(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
    }
    Ok(())
}

/// Shuffles the blocks with `seed`, then gives each block to the split
/// whose share of assigned tiles is furthest below its target. Ties go to
/// the earlier split.
pub fn block_split(tiles: &[(i64, i64)], block_size_m: i64, fractions: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    validate_fractions(&fractions)?;
    if block_size_m <= 0 {
        return Err(DataError::InvalidConfig("block size must be positive".into()));
    }
    let mut sizes: BTreeMap<BlockId, usize> = BTreeMap::new();
    for &(e, n) in tiles {
        *sizes.entry(block_of(e, n, block_size_m)).or_insert(0) += 1;
    }
    if sizes.len() < 3 {
        return Err(DataError::TooFewBlocks(sizes.len()));
    }
    let mut blocks: Vec<(BlockId, usize)> = sizes.into_iter().collect();
    blocks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assigned = [0usize; 3];
    let mut mapping = BTreeMap::new();
    for (block, size) in blocks {
        let total = assigned.iter().sum::<usize>().max(1) as f64;
        let mut best = 0;
        let mut best_deficit = f64::NEG_INFINITY;
        for s in 0..3 {
            let deficit = fractions[s] - assigned[s] as f64 / total;
            if deficit > best_deficit {
                best = s;
                best_deficit = deficit;
            }
        }
        assigned[best] += size;
        mapping.insert(block, SPLITS[best]);
    }
    Ok(SplitAssignment {
        block_size_m,
        fractions,
        mapping,
    })
}
