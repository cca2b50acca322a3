use std::collections::{BTreeMap, HashMap, HashSet};

use wincel_core::dataset::{SentenceEntry, Split, TripletRecord};

use crate::geo::Tile;
use crate::wiki::{SentenceSets, TextType};

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<TripletRecord>,
    pub bank: Vec<SentenceEntry>,
    pub dropped_empty: usize,
}

/// Deduplicated union of one text type over the species of a tile, in
/// species order then article order.
pub fn tile_sentences<'a>(tile: &Tile, sets: &'a BTreeMap<String, SentenceSets>, text_type: TextType) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    tile.species
        .iter()
        .filter_map(|s| sets.get(s))
        .flat_map(|s| s.get(text_type))
        .filter(|s| seen.insert(*s))
        .collect()
}

/// Builds one record per labelled tile. Sentence ids are assigned in order
/// of first appearance over tiles sorted by id. Splits are left unassigned.
pub fn build_manifest(
    tiles: &[&Tile],
    labels: &BTreeMap<String, usize>,
    sets: &BTreeMap<String, SentenceSets>,
    text_type: TextType,
) -> Manifest {
    let mut ordered: Vec<&&Tile> = tiles.iter().filter(|t| labels.contains_key(&t.tile_id)).collect();
    ordered.sort_by(|a, b| a.tile_id.cmp(&b.tile_id));
    let mut ids: HashMap<&str, u64> = HashMap::new();
    let mut bank = Vec::new();
    let mut records = Vec::new();
    let mut dropped_empty = 0;
    for tile in ordered {
        let sentences = tile_sentences(tile, sets, text_type);
        if sentences.is_empty() {
            dropped_empty += 1;
            continue;
        }
        let sentence_ids = sentences
            .into_iter()
            .map(|s| {
                *ids.entry(s).or_insert_with(|| {
                    let id = bank.len() as u64;
                    bank.push(SentenceEntry { id, text: s.to_string() });
                    id
                })
            })
            .collect();
        records.push(TripletRecord {
            tile_id: tile.tile_id.clone(),
            easting: tile.easting,
            northing: tile.northing,
            species: tile.species.iter().cloned().collect(),
            sentence_ids,
            eunis_label: labels[&tile.tile_id],
            split: Split::Unassigned,
        });
    }
    Manifest {
        records,
        bank,
        dropped_empty,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(name: &str, habitat: &[&str]) -> (String, SentenceSets) {
        let h: Vec<String> = habitat.iter().map(|s| s.to_string()).collect();
        (
            name.to_string(),
            SentenceSets { habitat: h.clone(), keywords: vec![], random: h, species_name: name.to_string() },
        )
    }

    fn tile(id: &str, species: &[&str]) -> Tile {
        Tile { tile_id: id.into(), easting: 0, northing: 0, species: species.iter().map(|s| s.to_string()).collect() }
    }

    #[test]
    fn shared_sentence_appears_once() {
        let s: BTreeMap<_, _> = [sets("A a", &["x y z", "shared one two"]), sets("B b", &["shared one two", "w v u"])].into();
        let t = tile("t1", &["A a", "B b"]);
        let labels = [("t1".to_string(), 0)].into();
        let m = build_manifest(&[&t], &labels, &s, TextType::Habitat);
        assert_eq!(m.records[0].sentence_ids, [0, 1, 2]);
        assert_eq!(m.bank.len(), 3);
    }

    #[test]
    fn species_name_and_empty_drop() {
        let s: BTreeMap<_, _> = [sets("A a", &["x y z"]), sets("B b", &["q r s"])].into();
        let t2 = tile("t2", &["B b"]);
        let t1 = tile("t1", &["A a", "B b"]);
        let labels = [("t1".to_string(), 1), ("t2".to_string(), 0)].into();
        let m = build_manifest(&[&t2, &t1], &labels, &s, TextType::SpeciesName);
        let texts: Vec<&str> = m.bank.iter().map(|e| e.text.as_str()).collect();
        assert_eq!(texts, ["A a", "B b"]);
        assert_eq!(m.records[0].tile_id, "t1");
        assert_eq!(m.records[1].sentence_ids, [1]);
        let m = build_manifest(&[&t1], &labels, &s, TextType::Keywords);
        assert!(m.records.is_empty());
        assert_eq!(m.dropped_empty, 1);
    }
}
