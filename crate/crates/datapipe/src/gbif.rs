//! GBIF occurrence tables and the occurrence filter.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::Serialize;

use crate::error::{DataError, Result};

pub const MAX_UNCERTAINTY_M: f64 = 100.0;
pub const KINGDOMS: [&str; 2] = ["Animalia", "Plantae"];
pub const DEDUP_DECIMALS: usize = 5;

/// Rejection rules in reporting order.
pub const RULES: [&str; 9] = [
    "malformed",
    "uncertainty_missing",
    "uncertainty",
    "species_missing",
    "coordinate_rounded",
    "kingdom",
    "no_habitat_article",
    "duplicate",
    "out_of_extent",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccurrenceRecord {
    pub species: Option<String>,
    pub lat: f64,
    pub lon: f64,
    pub coord_uncertainty_m: Option<f64>,
    pub basis_of_record: String,
    pub year: Option<i32>,
    pub issue_flags: Vec<String>,
    pub taxon_kingdom: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedRecord {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Rejections {
    counts: BTreeMap<&'static str, usize>,
}

impl Rejections {
    pub fn new() -> Self {
        Rejections {
            counts: RULES.iter().map(|r| (*r, 0)).collect(),
        }
    }

    pub fn add(&mut self, rule: &'static str, n: usize) {
        debug_assert!(RULES.contains(&rule));
        *self.counts.entry(rule).or_insert(0) += n;
    }

    pub fn get(&self, rule: &str) -> usize {
        self.counts.get(rule).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Counts in `RULES` order.
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, usize)> + '_ {
        RULES.iter().map(|r| (*r, self.get(r)))
    }
}

const COLUMNS: [&str; 8] = [
    "species",
    "decimalLatitude",
    "decimalLongitude",
    "coordinateUncertaintyInMeters",
    "basisOfRecord",
    "issue",
    "kingdom",
    "year",
];

fn optional(s: &str) -> Option<&str> {
    let t = s.trim();
    (!t.is_empty()).then_some(t)
}

fn parse_row(fields: &[&str]) -> std::result::Result<OccurrenceRecord, String> {
    let number = |i: usize| -> std::result::Result<Option<f64>, String> {
        optional(fields[i])
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| format!("{} is not a number: {v:?}", COLUMNS[i]))
            })
            .transpose()
    };
    let lat = number(1)?.ok_or("missing decimalLatitude")?;
    let lon = number(2)?.ok_or("missing decimalLongitude")?;
    if !(-90.0..=90.0).contains(&lat) {
        return Err(format!("latitude {lat} out of range"));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(format!("longitude {lon} out of range"));
    }
    let year = optional(fields[7])
        .map(|v| v.parse::<i32>().map_err(|_| format!("year is not an integer: {v:?}")))
        .transpose()?;
    Ok(OccurrenceRecord {
        species: optional(fields[0]).map(str::to_string),
        lat,
        lon,
        coord_uncertainty_m: number(3)?,
        basis_of_record: fields[4].trim().to_string(),
        year,
        issue_flags: fields[5]
            .split(';')
            .map(str::trim)
            .filter(|f| !f.is_empty())
            .map(str::to_string)
            .collect(),
        taxon_kingdom: fields[6].trim().to_string(),
    })
}

/// Parses a tab-separated occurrence table. Columns are located by header
/// name; extra columns are ignored. Bad rows are collected, not fatal.
pub fn parse_gbif_tsv(text: &str, path: &Path) -> Result<(Vec<OccurrenceRecord>, Vec<MalformedRecord>)> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Ok((Vec::new(), Vec::new()));
    };
    let names: Vec<&str> = header.split('\t').map(str::trim).collect();
    let index: Vec<usize> = COLUMNS
        .iter()
        .map(|c| {
            names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| DataError::parse(path, 1, format!("missing column {c:?}")))
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        let row: Option<Vec<&str>> = index.iter().map(|&c| cells.get(c).copied()).collect();
        let result = match row {
            Some(row) => parse_row(&row),
            None => Err(format!("expected {} columns, found {}", names.len(), cells.len())),
        };
        match result {
            Ok(r) => records.push(r),
            Err(reason) => malformed.push(MalformedRecord { line: i + 1, reason }),
        }
    }
    Ok((records, malformed))
}

pub fn read_gbif(path: &Path) -> Result<(Vec<OccurrenceRecord>, Vec<MalformedRecord>)> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_gbif_tsv(&text, path)
}

pub fn is_coordinate_rounded(flag: &str) -> bool {
    flag.trim().replace(' ', "_").eq_ignore_ascii_case("COORDINATE_ROUNDED")
}

fn dedup_key(species: &str, lat: f64, lon: f64) -> (String, String, String) {
    (
        species.to_string(),
        format!("{lat:.prec$}", prec = DEDUP_DECIMALS),
        format!("{lon:.prec$}", prec = DEDUP_DECIMALS),
    )
}

/// First rule a record violates, checked in `RULES` order.
pub fn rejection_rule(r: &OccurrenceRecord, has_article: &dyn Fn(&str) -> bool) -> Option<&'static str> {
    let Some(u) = r.coord_uncertainty_m else {
        return Some("uncertainty_missing");
    };
    if u > MAX_UNCERTAINTY_M {
        return Some("uncertainty");
    }
    let Some(species) = r.species.as_deref() else {
        return Some("species_missing");
    };
    if r.issue_flags.iter().any(|f| is_coordinate_rounded(f)) {
        return Some("coordinate_rounded");
    }
    if !KINGDOMS.contains(&r.taxon_kingdom.as_str()) {
        return Some("kingdom");
    }
    if !has_article(species) {
        return Some("no_habitat_article");
    }
    None
}

/// Applies the occurrence rules, then drops repeated (species, location)
/// pairs keeping the first. Each dropped record counts against one rule.
pub fn filter_gbif(
    records: Vec<OccurrenceRecord>,
    has_article: &dyn Fn(&str) -> bool,
) -> (Vec<OccurrenceRecord>, Rejections) {
    let mut rejections = Rejections::new();
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    for r in records {
        if let Some(rule) = rejection_rule(&r, has_article) {
            rejections.add(rule, 1);
            continue;
        }
        let species = r.species.as_deref().expect("checked above");
        if !seen.insert(dedup_key(species, r.lat, r.lon)) {
            rejections.add("duplicate", 1);
            continue;
        }
        kept.push(r);
    }
    (kept, rejections)
}
