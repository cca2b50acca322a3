use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wincel_core::dataset::Split;
use wincel_datapipe::split::{block_of, block_split, DEFAULT_BLOCK_SIZE_M, DEFAULT_FRACTIONS, SPLITS};
use wincel_datapipe::DataError;

fn random_tiles(seed: u64, n: usize, extent_m: i64) -> Vec<(i64, i64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = extent_m / 100;
    (0..n)
        .map(|_| (2_480_000 + rng.random_range(0..cells) * 100, 1_070_000 + rng.random_range(0..cells) * 100))
        .collect()
}

fn fractions(tiles: &[(i64, i64)], split_of: impl Fn(i64, i64) -> Split) -> [f64; 3] {
    let mut counts = [0usize; 3];
    for &(e, n) in tiles {
        let i = SPLITS.iter().position(|&s| s == split_of(e, n)).expect("assigned");
        counts[i] += 1;
    }
    counts.map(|c| c as f64 / tiles.len() as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn blocks_never_straddle_splits_and_fractions_hold(seed in any::<u64>()) {
        let tiles = random_tiles(seed, 10_000, 400_000);
        let a = block_split(&tiles, DEFAULT_BLOCK_SIZE_M, DEFAULT_FRACTIONS, seed).unwrap();
        let mut seen: BTreeMap<(i64, i64), Split> = BTreeMap::new();
        for &(e, n) in &tiles {
            let s = a.split_of(e, n);
            prop_assert_ne!(s, Split::Unassigned);
            let prev = *seen.entry(block_of(e, n, DEFAULT_BLOCK_SIZE_M)).or_insert(s);
            prop_assert_eq!(prev, s);
        }
        let got = fractions(&tiles, |e, n| a.split_of(e, n));
        for (g, want) in got.iter().zip(DEFAULT_FRACTIONS) {
            prop_assert!((g - want).abs() <= 0.02, "{:?}", got);
        }
    }

    #[test]
    fn split_is_a_function_of_seed(seed in any::<u64>()) {
        let tiles = random_tiles(seed, 500, 200_000);
        let a = block_split(&tiles, DEFAULT_BLOCK_SIZE_M, DEFAULT_FRACTIONS, seed).unwrap();
        prop_assert_eq!(&a, &block_split(&tiles, DEFAULT_BLOCK_SIZE_M, DEFAULT_FRACTIONS, seed).unwrap());
    }
}

#[test]
fn one_tile_per_block_over_a_thousand_blocks() {
    let tiles: Vec<(i64, i64)> = (0..1000).map(|i| ((i % 40) * 20_000 + 5_000, (i / 40) * 20_000 + 5_000)).collect();
    let a = block_split(&tiles, DEFAULT_BLOCK_SIZE_M, DEFAULT_FRACTIONS, 11).unwrap();
    assert_eq!(a.mapping.len(), 1000);
    let got = fractions(&tiles, |e, n| a.split_of(e, n));
    for (g, want) in got.iter().zip(DEFAULT_FRACTIONS) {
        assert!((g - want).abs() <= 0.02, "{got:?}");
    }
}

#[test]
fn single_block_is_rejected() {
    let tiles = [(2_600_000, 1_200_000), (2_600_100, 1_200_000)];
    assert!(matches!(
        block_split(&tiles, DEFAULT_BLOCK_SIZE_M, DEFAULT_FRACTIONS, 0),
        Err(DataError::TooFewBlocks(1))
    ));
}

#[test]
fn neighbouring_tiles_share_a_split() {
    let tiles = random_tiles(5, 2000, 200_000);
    let a = block_split(&tiles, DEFAULT_BLOCK_SIZE_M, DEFAULT_FRACTIONS, 5).unwrap();
    for &(e, n) in &tiles {
        if block_of(e, n, DEFAULT_BLOCK_SIZE_M) == block_of(e + 100, n, DEFAULT_BLOCK_SIZE_M) {
            assert_eq!(a.split_of(e, n), a.split_of(e + 100, n));
        }
    }
}
