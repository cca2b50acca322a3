//! EUNIS habitat labels: merging, removal and class-size balancing.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DataError, Result};

pub const REMOVE: &str = "REMOVE";
pub const DEFAULT_MIN_COUNT: usize = 100;
pub const DEFAULT_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RebalanceParams {
    pub min_count: usize,
    pub cap: usize,
    pub seed: u64,
}

impl Default for RebalanceParams {
    fn default() -> Self {
        RebalanceParams {
            min_count: DEFAULT_MIN_COUNT,
            cap: DEFAULT_CAP,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MergeTarget<'a> {
    Class(&'a str),
    Removed,
}

/// Parent links from the merge table; a `REMOVE` target drops the class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MergeMap {
    links: BTreeMap<String, String>,
}

impl MergeMap {
    pub fn new<I: IntoIterator<Item = (String, String)>>(pairs: I) -> Self {
        MergeMap {
            links: pairs.into_iter().collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(MergeMap::new(read_pairs(path, "from_code", "to_code_or_REMOVE")?.into_iter().map(|(_, a, b)| (a, b))))
    }

    /// Follows merges to the final class.
    pub fn resolve<'a>(&'a self, code: &'a str) -> Result<MergeTarget<'a>> {
        let mut current = code;
        let mut visited = BTreeSet::new();
        while let Some(next) = self.links.get(current) {
            if next == REMOVE {
                return Ok(MergeTarget::Removed);
            }
            if !visited.insert(current) {
                return Err(DataError::MergeCycle(code.to_string()));
            }
            current = next;
        }
        Ok(MergeTarget::Class(current))
    }
}

/// Reads a two-column CSV with the given header, returning (line, a, b).
pub fn read_pairs(path: &Path, first: &str, second: &str) -> Result<Vec<(usize, String, String)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() != 2 || &headers[0] != first || &headers[1] != second {
        return Err(DataError::parse(path, 1, format!("expected header `{first},{second}`")));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 || rec[0].is_empty() || rec[1].is_empty() {
            return Err(DataError::parse(path, line, "expected two non-empty fields"));
        }
        out.push((line, rec[0].to_string(), rec[1].to_string()));
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DataError::io(path, io),
        other => DataError::parse(path, line, format!("{other:?}")),
    }
}

/// Tile labels keyed by tile id. Repeated ids are a parse error.
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut labels = BTreeMap::new();
    for (line, tile, code) in read_pairs(path, "tile_id", "eunis_code")? {
        if labels.insert(tile.clone(), code).is_some() {
            return Err(DataError::parse(path, line, format!("duplicate tile id {tile:?}")));
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rebalanced {
    /// Surviving tiles with their class index, ordered by tile id.
    pub tiles: BTreeMap<String, usize>,
    /// Sorted final class codes; position is the class index.
    pub classes: Vec<String>,
    pub removed_by_merge: usize,
    pub removed_small: usize,
    pub removed_by_cap: usize,
}

pub fn rebalance_eunis(labels: &BTreeMap<String, String>, merges: &MergeMap, params: &RebalanceParams) -> Result<Rebalanced> {
    if params.min_count > params.cap || params.cap == 0 {
        return Err(DataError::InvalidConfig(format!(
            "need 0 < min_count <= cap, got {} and {}",
            params.min_count, params.cap
        )));
    }
    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut removed_by_merge = 0;
    for (tile, code) in labels {
        match merges.resolve(code)? {
            MergeTarget::Class(c) => by_class.entry(c).or_default().push(tile),
            MergeTarget::Removed => removed_by_merge += 1,
        }
    }
    let mut removed_small = 0;
    let mut removed_by_cap = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut kept: Vec<(&str, Vec<&str>)> = Vec::new();
    for (class, tiles) in by_class {
        if tiles.len() < params.min_count {
            removed_small += tiles.len();
            continue;
        }
        let tiles = if tiles.len() > params.cap {
            removed_by_cap += tiles.len() - params.cap;
            let mut picked = sample(&mut rng, tiles.len(), params.cap).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| tiles[i]).collect()
        } else {
            tiles
        };
        kept.push((class, tiles));
    }
    let classes: Vec<String> = kept.iter().map(|(c, _)| c.to_string()).collect();
    let tiles = kept
        .iter()
        .enumerate()
        .flat_map(|(i, (_, ts))| ts.iter().map(move |t| (t.to_string(), i)))
        .collect();
    Ok(Rebalanced {
        tiles,
        classes,
        removed_by_merge,
        removed_small,
        removed_by_cap,
    })
}
