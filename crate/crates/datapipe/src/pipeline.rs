//! End-to-end dataset construction and its on-disk outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wincel_core::dataset::{write_bank, write_jsonl, write_manifest, SentenceEntry, Split, TripletRecord};
use wincel_core::seed::derive;

use crate::dump::{open_pages, Page};
use crate::eunis::{read_labels, rebalance_eunis, MergeMap, RebalanceParams, DEFAULT_CAP, DEFAULT_MIN_COUNT};
use crate::error::{DataError, Result};
use crate::gbif::{filter_gbif, read_gbif, Rejections};
use crate::geo::{assign_tiles, Grid, ProjectedOccurrence, ProjectionSpec};
use crate::manifest::{build_manifest, tile_sentences};
use crate::split::{block_of, block_split, DEFAULT_BLOCK_SIZE_M, DEFAULT_FRACTIONS, SPLITS};
use crate::wiki::{extract_text_sets, parse_article, KeywordSet, SentenceSets, TextType};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SENTENCES_FILE: &str = "sentences.jsonl";
pub const SENTENCE_SETS_FILE: &str = "sentence_sets.jsonl";
pub const SPLITS_FILE: &str = "splits.csv";
pub const CLASSES_FILE: &str = "classes.txt";
pub const STATS_FILE: &str = "stats.txt";

const PAGE_CHUNK: usize = 256;
const REBALANCE_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub text_type: TextType,
    pub projection: ProjectionSpec,
    pub grid: Grid,
    pub min_count: usize,
    pub cap: usize,
    pub block_size_m: i64,
    pub fractions: [f64; 3],
    /// Expected number of final classes; a mismatch is reported as a warning.
    pub target_classes: Option<usize>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            text_type: TextType::Habitat,
            projection: ProjectionSpec::Lv95,
            grid: Grid::default(),
            min_count: DEFAULT_MIN_COUNT,
            cap: DEFAULT_CAP,
            block_size_m: DEFAULT_BLOCK_SIZE_M,
            fractions: DEFAULT_FRACTIONS,
            target_classes: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineInputs {
    pub gbif: PathBuf,
    pub wiki: PathBuf,
    pub eunis: PathBuf,
    pub merge_map: Option<PathBuf>,
    pub keywords: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArticleStats {
    pub pages: usize,
    pub species_pages: usize,
    pub malformed_speciesbox: usize,
    pub without_habitat: usize,
    pub duplicate_articles: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TileStats {
    pub occupied: usize,
    pub unlabeled: usize,
    pub removed_by_merge: usize,
    pub removed_small: usize,
    pub removed_by_cap: usize,
    pub empty_sentence_set: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextTypeStats {
    pub text_type: TextType,
    pub sentences: usize,
    pub unique: usize,
    pub per_location: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub records_read: usize,
    pub rejections: Rejections,
    pub articles: ArticleStats,
    pub tiles: TileStats,
    pub text_types: Vec<TextTypeStats>,
    pub classes: Vec<String>,
    /// Tiles per class and split, indexed `[class][split]`.
    pub class_splits: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub records: Vec<TripletRecord>,
    pub bank: Vec<SentenceEntry>,
    pub sentence_sets: BTreeMap<String, SentenceSets>,
    pub classes: Vec<String>,
    pub block_size_m: i64,
    pub stats: Stats,
    pub warnings: Vec<String>,
}

enum PageOutcome {
    NotSpecies,
    Malformed,
    NoHabitat,
    Parsed(SentenceSets),
}

fn parse_page(page: &Page, keywords: &KeywordSet) -> PageOutcome {
    match parse_article(&page.text) {
        Ok(None) => PageOutcome::NotSpecies,
        Err(_) => PageOutcome::Malformed,
        Ok(Some(article)) => match extract_text_sets(&article, keywords) {
            Ok(sets) => PageOutcome::Parsed(sets),
            Err(_) => PageOutcome::NoHabitat,
        },
    }
}

/// Parses all pages into the species index, in input order; the first
/// article for a binomial wins.
pub fn index_articles(
    pages: impl Iterator<Item = Result<Page>>,
    keywords: &KeywordSet,
) -> Result<(BTreeMap<String, SentenceSets>, ArticleStats)> {
    let mut index = BTreeMap::new();
    let mut stats = ArticleStats::default();
    let mut pages = pages.peekable();
    while pages.peek().is_some() {
        let chunk: Vec<Page> = pages.by_ref().take(PAGE_CHUNK).collect::<Result<_>>()?;
        let outcomes: Vec<PageOutcome> = chunk.par_iter().map(|p| parse_page(p, keywords)).collect();
        for (page, outcome) in chunk.iter().zip(outcomes) {
            stats.pages += 1;
            match outcome {
                PageOutcome::NotSpecies => {}
                PageOutcome::Malformed => {
                    stats.species_pages += 1;
                    stats.malformed_speciesbox += 1;
                    log::debug!("malformed Speciesbox in {:?}", page.title);
                }
                PageOutcome::NoHabitat => {
                    stats.species_pages += 1;
                    stats.without_habitat += 1;
                }
                PageOutcome::Parsed(sets) => {
                    stats.species_pages += 1;
                    if index.contains_key(&sets.species_name) {
                        stats.duplicate_articles += 1;
                    } else {
                        index.insert(sets.species_name.clone(), sets);
                    }
                }
            }
        }
    }
    Ok((index, stats))
}

pub fn text_type_stats(tiles: &[&crate::geo::Tile], sets: &BTreeMap<String, SentenceSets>) -> Vec<TextTypeStats> {
    TextType::ALL
        .into_iter()
        .map(|tt| {
            let mut unique = std::collections::HashSet::new();
            let mut sentences = 0;
            for t in tiles {
                let s = tile_sentences(t, sets, tt);
                sentences += s.len();
                unique.extend(s);
            }
            TextTypeStats {
                text_type: tt,
                sentences,
                unique: unique.len(),
                per_location: if tiles.is_empty() { 0.0 } else { sentences as f64 / tiles.len() as f64 },
            }
        })
        .collect()
}

fn validate(config: &PipelineConfig) -> Result<()> {
    config.grid.validate()?;
    crate::split::validate_fractions(&config.fractions)?;
    if config.block_size_m <= 0 {
        return Err(DataError::InvalidConfig("block size must be positive".into()));
    }
    if config.min_count > config.cap || config.cap == 0 {
        return Err(DataError::InvalidConfig(format!(
            "need 0 < min_count <= cap, got {} and {}",
            config.min_count, config.cap
        )));
    }
    Ok(())
}

pub fn run(inputs: &PipelineInputs, config: &PipelineConfig) -> Result<PipelineOutput> {
    validate(config)?;
    let keywords = KeywordSet::load(&inputs.keywords)?;
    let merges = match &inputs.merge_map {
        Some(p) => MergeMap::load(p)?,
        None => MergeMap::default(),
    };
    let labels = read_labels(&inputs.eunis)?;
    let (sentence_sets, articles) = index_articles(open_pages(&inputs.wiki)?, &keywords)?;
    let mut warnings = Vec::new();

    let (records, malformed) = read_gbif(&inputs.gbif)?;
    let records_read = records.len() + malformed.len();
    if records_read == 0 {
        warnings.push(format!("no occurrence records in {}", inputs.gbif.display()));
    }
    for m in &malformed {
        log::debug!("{}:{}: {}", inputs.gbif.display(), m.line, m.reason);
    }
    let has_article = |s: &str| sentence_sets.contains_key(s);
    let (kept, mut rejections) = filter_gbif(records, &has_article);
    rejections.add("malformed", malformed.len());

    let projection = config.projection.build();
    let mut projected = Vec::with_capacity(kept.len());
    for r in kept {
        let (easting, northing) = projection.project(r.lat, r.lon);
        if config.grid.contains(easting, northing) {
            projected.push(ProjectedOccurrence {
                species: r.species.expect("filtered"),
                easting,
                northing,
            });
        } else {
            rejections.add("out_of_extent", 1);
        }
    }
    let tiles = assign_tiles(&projected, &config.grid)?;

    let mut tile_stats = TileStats {
        occupied: tiles.len(),
        ..TileStats::default()
    };
    let observed: BTreeMap<String, String> = tiles
        .keys()
        .filter_map(|id| labels.get(id).map(|c| (id.clone(), c.clone())))
        .collect();
    tile_stats.unlabeled = tiles.len() - observed.len();
    let params = RebalanceParams {
        min_count: config.min_count,
        cap: config.cap,
        seed: derive(config.seed, &[REBALANCE_STREAM]),
    };
    let balanced = rebalance_eunis(&observed, &merges, &params)?;
    tile_stats.removed_by_merge = balanced.removed_by_merge;
    tile_stats.removed_small = balanced.removed_small;
    tile_stats.removed_by_cap = balanced.removed_by_cap;

    let candidates: Vec<&crate::geo::Tile> = balanced.tiles.keys().map(|id| &tiles[id]).collect();
    let mut manifest = build_manifest(&candidates, &balanced.tiles, &sentence_sets, config.text_type);
    tile_stats.empty_sentence_set = manifest.dropped_empty;
    let final_tiles: Vec<&crate::geo::Tile> = manifest.records.iter().map(|r| &tiles[&r.tile_id]).collect();

    if manifest.records.is_empty() {
        warnings.push("no tiles survived filtering; the manifest is empty".to_string());
    } else {
        let coords: Vec<(i64, i64)> = manifest.records.iter().map(|r| (r.easting, r.northing)).collect();
        let assignment = block_split(&coords, config.block_size_m, config.fractions, derive(config.seed, &[SPLIT_STREAM]))?;
        for r in &mut manifest.records {
            r.split = assignment.split_of(r.easting, r.northing);
        }
    }
    if let Some(target) = config.target_classes {
        if target != balanced.classes.len() {
            warnings.push(format!("expected {target} classes, found {}", balanced.classes.len()));
        }
    }

    let mut class_splits = vec![[0usize; 3]; balanced.classes.len()];
    for r in &manifest.records {
        if let Some(s) = SPLITS.iter().position(|s| *s == r.split) {
            class_splits[r.eunis_label][s] += 1;
        }
    }
    let stats = Stats {
        records_read,
        rejections,
        articles,
        tiles: tile_stats,
        text_types: text_type_stats(&final_tiles, &sentence_sets),
        classes: balanced.classes.clone(),
        class_splits,
    };
    Ok(PipelineOutput {
        records: manifest.records,
        bank: manifest.bank,
        sentence_sets,
        classes: balanced.classes,
        block_size_m: config.block_size_m,
        stats,
        warnings,
    })
}

impl Stats {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let rejected = self.rejections.total();
        let _ = writeln!(s, "[gbif]");
        let _ = writeln!(s, "records_read\t{}", self.records_read);
        let _ = writeln!(s, "kept\t{}", self.records_read - rejected);
        let _ = writeln!(s, "rejected\t{rejected}");
        for (rule, n) in self.rejections.iter() {
            let _ = writeln!(s, "rejected.{rule}\t{n}");
        }
        let a = &self.articles;
        let _ = writeln!(s, "\n[articles]");
        let _ = writeln!(s, "pages\t{}", a.pages);
        let _ = writeln!(s, "species_pages\t{}", a.species_pages);
        let _ = writeln!(s, "malformed_speciesbox\t{}", a.malformed_speciesbox);
        let _ = writeln!(s, "without_habitat\t{}", a.without_habitat);
        let _ = writeln!(s, "duplicate_articles\t{}", a.duplicate_articles);
        let indexed = a.species_pages - a.malformed_speciesbox - a.without_habitat - a.duplicate_articles;
        let _ = writeln!(s, "indexed\t{indexed}");
        let t = &self.tiles;
        let _ = writeln!(s, "\n[tiles]");
        let _ = writeln!(s, "occupied\t{}", t.occupied);
        let _ = writeln!(s, "unlabeled\t{}", t.unlabeled);
        let _ = writeln!(s, "removed_by_merge\t{}", t.removed_by_merge);
        let _ = writeln!(s, "removed_small\t{}", t.removed_small);
        let _ = writeln!(s, "removed_by_cap\t{}", t.removed_by_cap);
        let _ = writeln!(s, "empty_sentence_set\t{}", t.empty_sentence_set);
        let total: usize = self.class_splits.iter().flatten().sum();
        let _ = writeln!(s, "final\t{total}");
        let _ = writeln!(s, "\n[sentences]");
        let _ = writeln!(s, "Text type\tNumber of sentences\tNumber of unique sentences\tAverage number of sentences per location");
        for tt in &self.text_types {
            let _ = writeln!(s, "{}\t{}\t{}\t{:.2}", tt.text_type, tt.sentences, tt.unique, tt.per_location);
        }
        let _ = writeln!(s, "\n[classes]");
        let _ = writeln!(s, "label\tcode\ttiles\ttrain\tval\ttest");
        for (i, (code, counts)) in self.classes.iter().zip(&self.class_splits).enumerate() {
            let n: usize = counts.iter().sum();
            let _ = writeln!(s, "{i}\t{code}\t{n}\t{}\t{}\t{}", counts[0], counts[1], counts[2]);
        }
        let _ = writeln!(s, "\n[splits]");
        for (k, split) in SPLITS.iter().enumerate() {
            let n: usize = self.class_splits.iter().map(|c| c[k]).sum();
            let frac = if total == 0 { 0.0 } else { n as f64 / total as f64 };
            let _ = writeln!(s, "{split}\t{n}\t{frac:.4}");
        }
        s
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| DataError::io(path, e))
}

/// Writes every pipeline artifact into `dir`.
pub fn write_outputs(output: &PipelineOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    write_manifest(&dir.join(MANIFEST_FILE), &output.records)?;
    write_bank(&dir.join(SENTENCES_FILE), &output.bank)?;
    let sets: Vec<&SentenceSets> = output.sentence_sets.values().collect();
    write_jsonl(&dir.join(SENTENCE_SETS_FILE), &sets)?;
    let mut splits = String::from("tile_id,block_e,block_n,split\n");
    for r in &output.records {
        let (be, bn) = block_of(r.easting, r.northing, output.block_size_m);
        let _ = writeln!(splits, "{},{be},{bn},{}", r.tile_id, r.split);
    }
    write_text(&dir.join(SPLITS_FILE), &splits)?;
    let classes: String = output.classes.iter().map(|c| format!("{c}\n")).collect();
    write_text(&dir.join(CLASSES_FILE), &classes)?;
    write_text(&dir.join(STATS_FILE), &output.stats.render())
}

/// Tiles per split, in train/val/test order.
pub fn split_counts(records: &[TripletRecord]) -> [usize; 3] {
    let mut counts = [0; 3];
    for r in records {
        if let Some(i) = [Split::Train, Split::Val, Split::Test].iter().position(|s| *s == r.split) {
            counts[i] += 1;
        }
    }
    counts
}
